#include <gtest/gtest.h>

#include "wml/rng.hpp"

using wml::Rng;

TEST(RngTest, SameSeedSameStream) {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next(), b.next());
}

TEST(RngTest, ChildIgnoresParentConsumption) {
  Rng a(5), b(5);
  for (int i = 0; i < 37; ++i) (void)b.normal();
  Rng ca = a.child("edge", 3), cb = b.child("edge", 3);
  for (int i = 0; i < 10; ++i) ASSERT_EQ(ca.next(), cb.next());
}

TEST(RngTest, LabelsAndIndicesSeparateStreams) {
  Rng root(5);
  EXPECT_NE(root.child("a").next(), root.child("b").next());
  EXPECT_NE(root.child("a", 0).next(), root.child("a", 1).next());
  EXPECT_NE(Rng(1).child("a").next(), Rng(2).child("a").next());
}

TEST(RngTest, UniformIndexInRange) {
  Rng r(9);
  for (int i = 0; i < 1000; ++i) {
    const auto v = r.uniform_index(7);
    ASSERT_LT(v, 7u);
  }
}
