#pragma once

// Counter-based random streams.
//
// Every stochastic quantity in the pipeline is drawn from a stream addressed
// by (global seed, role, index). The seed is the Philox key; role and index
// occupy the upper half of the 128-bit counter and the lower half counts
// blocks within the stream. Distinct (role, index) pairs therefore never
// share a counter value, and how much one role consumes cannot shift any
// other role's numbers.

#include <array>
#include <cstdint>

namespace flowguide {

enum class Role : std::uint32_t {
  kInit = 1,          // parameter initialization
  kData = 2,          // draws from the toy density
  kTrainNoise = 3,    // x1 ~ N(0, I) during training, index = epoch
  kTrainTime = 4,     // t ~ U(0, 1) during training, index = epoch
  kShuffle = 5,       // per-epoch permutation, index = epoch
  kSamplerInit = 6,   // initial noise, index = chain
  kSamplerNoise = 7,  // Brownian increments, index = chain
  kOracle = 8,        // rejection sampler
  kSubsample = 9,     // evaluator subsampling
  kGradcheck = 10,    // random instances for gradient checks
  kEmbedPairs = 11,   // random condition pairs for the embedding scan
};

/// Philox4x32 with 10 rounds.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

class Stream {
 public:
  Stream(std::uint64_t seed, Role role, std::uint32_t index);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// A pair of independent standard normals (Box-Muller on one block).
  std::array<double, 2> normal_pair();
  double normal();
  /// Uniform integer in [0, n). Uses rejection, so it is unbiased.
  std::uint64_t below(std::uint64_t n);

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::uint32_t role_;
  std::uint32_t index_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;  // 32-bit words consumed from buffer_
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace flowguide
