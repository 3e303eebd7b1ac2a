#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "fghv/keyvalue.hpp"
#include "fghv/models.hpp"

namespace fghv {

struct Sample {
  Vector x;
  int label = 1;  // 1 = real, 0 = attack
  int domain = 0;
};

/// Parameters of the synthetic multi-domain generator.
///
/// Every domain has a unit real-face center that mixes a direction shared by
/// all domains with a domain-private one (weight `real_coherence` on the shared
/// part). Each domain also owns `attack_types` attack centers, each displaced
/// from that domain's real center along its own random direction by
/// `attack_spread`. Samples are a center scaled by a factor in [0.8, 1.2]
/// plus isotropic noise of std `noise_sigma`.
struct SynthSpec {
  int d_in = 32;
  int n_domains = 4;
  int samples_per_class_per_domain = 250;
  double real_coherence = 0.7;
  double attack_spread = 0.9;
  double noise_sigma = 0.05;
  int attack_types = 3;
  int held_out_domain = -1;  // -1 = last domain
  std::uint64_t seed = 1;

  int test_domain() const { return held_out_domain < 0 ? n_domains - 1 : held_out_domain; }

  static SynthSpec from(const KeyValues& kv);
  KeyValues to_key_values() const;
  static const std::vector<std::string>& keys();
};

struct SynthSplit {
  std::vector<Sample> train;  // every domain but the held-out one
  std::vector<Sample> test;   // only the held-out domain
};

/// Pure function of the spec. Throws ConfigError on invalid parameters.
SynthSplit generate(const SynthSpec& spec);

/// Moves round(fraction * count) samples of every (domain, label) group out of
/// `samples` into the second element, choosing them by a seeded shuffle.
std::pair<std::vector<Sample>, std::vector<Sample>> split_dev(
    std::vector<Sample> samples, double fraction, std::uint64_t seed);

/// Header `label,domain,x0,...,x{D-1}`, one sample per row, 17 significant
/// digits per value.
void write_dataset(const std::vector<Sample>& samples, const std::filesystem::path& path);

/// Throws ParseError with the line number on a malformed row. An empty file,
/// or one with only a header, yields no samples.
std::vector<Sample> read_dataset(const std::filesystem::path& path);

/// Rows of a matrix, one per sample.
Matrix stack_inputs(const std::vector<Sample>& samples);

}  // namespace fghv
