#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace otpf {

// Deterministic, substream-addressable random source.
//
// A stream is identified by (seed, stream_id). Equal identifiers reproduce
// the exact same draw sequence on every platform; distinct identifiers give
// statistically unrelated sequences. Consumers derive one substream per
// logical noise source (e.g. per particle, per noise kind), so adding or
// removing particles never reshuffles the noise seen by the others.
class RngStream {
public:
  RngStream() : RngStream(0, 0) {}
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  // Child stream with an id mixed from this stream's id and `child`.
  RngStream substream(std::uint64_t child) const;

  // Uniform on [0, 1), 53-bit resolution.
  double uniform();

  // Standard normal via Box-Muller; draws two uniforms every other call.
  double normal();

  Eigen::VectorXd normal_vector(Eigen::Index n);

private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// splitmix64 finalizer; the mixing step behind stream derivation.
std::uint64_t mix64(std::uint64_t x);

}  // namespace otpf
