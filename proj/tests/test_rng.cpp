#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "flowguide/rng.hpp"

using namespace flowguide;

TEST_CASE("philox4x32-10 known-answer vectors") {
  using W = std::array<std::uint32_t, 4>;
  CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == W{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        W{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        W{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("same address, same sequence") {
  Stream a(42, Role::kData, 7), b(42, Role::kData, 7);
  for (int i = 0; i < 1000; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("streams differ by seed, role and index") {
  std::set<std::uint64_t> firsts;
  for (std::uint64_t seed : {0, 1})
    for (Role r : {Role::kData, Role::kOracle, Role::kSamplerNoise})
      for (std::uint32_t idx : {0u, 1u, 2u}) firsts.insert(Stream(seed, r, idx).next_u64());
  CHECK(firsts.size() == 18);
}

TEST_CASE("consuming one role leaves another untouched") {
  Stream data(3, Role::kData, 0);
  const auto expected = Stream(3, Role::kOracle, 0).next_u64();
  for (int i = 0; i < 10000; ++i) data.next_u64();
  CHECK(Stream(3, Role::kOracle, 0).next_u64() == expected);
}

TEST_CASE("uniform and normal moments") {
  Stream s(11, Role::kGradcheck, 0);
  const int n = 200000;
  double sum = 0, sum2 = 0, nsum = 0, nsum2 = 0;
  double lo = 1, hi = 0;
  for (int i = 0; i < n; ++i) {
    const double u = s.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
    sum2 += u * u;
    const double z = s.normal();
    nsum += z;
    nsum2 += z * z;
  }
  CHECK(lo >= 0.0);
  CHECK(hi < 1.0);
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(sum2 / n - (sum / n) * (sum / n) == doctest::Approx(1.0 / 12).epsilon(0.01));
  CHECK(std::abs(nsum / n) < 6.0 / std::sqrt(n));
  CHECK(nsum2 / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("below() stays in range and hits every value") {
  Stream s(5, Role::kShuffle, 0);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto k = s.below(7);
    REQUIRE(k < 7);
    ++hits[k];
  }
  for (int h : hits) CHECK(h > 850);
}
