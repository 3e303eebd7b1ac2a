#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "fghv/errors.hpp"
#include "fghv/metrics.hpp"
#include "fghv/synthdata.hpp"

using namespace fghv;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("fghv_synth_" + name);
}

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

/// Scores each test sample by how much closer it is to the training real
/// centroid than to the training attack centroid.
double centroid_auc(const SynthSplit& split) {
  const Index d = split.train.front().x.size();
  Vector real = Vector::Zero(d), attack = Vector::Zero(d);
  double nr = 0, na = 0;
  for (const auto& s : split.train) {
    if (s.label == 1) {
      real += s.x;
      ++nr;
    } else {
      attack += s.x;
      ++na;
    }
  }
  real /= nr;
  attack /= na;
  std::vector<LabeledScore> scores;
  for (const auto& s : split.test) {
    scores.push_back({(s.x - attack).squaredNorm() - (s.x - real).squaredNorm(), s.label});
  }
  return roc_auc(scores);
}

}  // namespace

TEST_CASE("same spec gives identical bytes") {
  const auto a = temp_file("a.csv"), b = temp_file("b.csv");
  write_dataset(generate(SynthSpec{}).train, a);
  write_dataset(generate(SynthSpec{}).train, b);
  CHECK(read_all(a) == read_all(b));
  SynthSpec other;
  other.seed = 2;
  write_dataset(generate(other).train, b);
  CHECK(read_all(a) != read_all(b));
  fs::remove(a);
  fs::remove(b);
}

TEST_CASE("full coherence without noise makes reals collinear") {
  SynthSpec spec;
  spec.real_coherence = 1.0;
  spec.noise_sigma = 0.0;
  const auto split = generate(spec);
  const Vector ref = split.train.front().x.normalized();
  for (const auto* set : {&split.train, &split.test}) {
    for (const auto& s : *set) {
      if (s.label == 1) CHECK(std::abs(s.x.normalized().dot(ref)) == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("default spec is separable but not trivially") {
  const double auc = centroid_auc(generate(SynthSpec{}));
  CHECK(auc > 0.6);
  CHECK(auc < 0.95);
}

TEST_CASE("held-out domain discipline and class balance") {
  SynthSpec spec;
  spec.samples_per_class_per_domain = 20;
  const auto split = generate(spec);
  CHECK(split.train.size() == 3u * 40u);
  CHECK(split.test.size() == 40u);
  std::map<std::pair<int, int>, int> counts;
  for (const auto& s : split.train) {
    CHECK(s.domain != spec.test_domain());
    counts[{s.domain, s.label}]++;
  }
  for (const auto& s : split.test) CHECK(s.domain == spec.test_domain());
  for (const auto& [key, n] : counts) CHECK(n == 20);

  spec.held_out_domain = 1;
  for (const auto& s : generate(spec).test) CHECK(s.domain == 1);
}

TEST_CASE("invalid specs") {
  SynthSpec one;
  one.n_domains = 1;
  CHECK_THROWS_AS(generate(one), ConfigError);
  SynthSpec coherence;
  coherence.real_coherence = 1.5;
  CHECK_THROWS_AS(generate(coherence), ConfigError);
  SynthSpec held;
  held.held_out_domain = 9;
  CHECK_THROWS_AS(generate(held), ConfigError);
}

TEST_CASE("dataset round trip") {
  const auto path = temp_file("roundtrip.csv");
  SynthSpec spec;
  spec.samples_per_class_per_domain = 5;
  const auto samples = generate(spec).train;
  write_dataset(samples, path);
  const auto back = read_dataset(path);
  REQUIRE(back.size() == samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(back[i].x == samples[i].x);
    CHECK(back[i].label == samples[i].label);
    CHECK(back[i].domain == samples[i].domain);
  }
  fs::remove(path);
}

TEST_CASE("dataset parse errors") {
  const auto path = temp_file("bad.csv");
  std::ofstream(path) << "label,domain,x0,x1\n1,0,0.5,0.25\n2,0,0.1,0.2\n";
  try {
    read_dataset(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }
  std::ofstream(path, std::ios::trunc) << "label,domain,x0,x1\n1,0,0.5\n";
  CHECK_THROWS_AS(read_dataset(path), ParseError);
  std::ofstream(path, std::ios::trunc) << "";
  CHECK(read_dataset(path).empty());
  fs::remove(path);
  CHECK_THROWS(read_dataset(path));
}

TEST_CASE("dev split is stratified and disjoint") {
  SynthSpec spec;
  spec.samples_per_class_per_domain = 50;
  const auto train = generate(spec).train;
  const auto [rest, dev] = split_dev(train, 0.1, 3);
  CHECK(rest.size() + dev.size() == train.size());
  std::map<std::pair<int, int>, int> counts;
  for (const auto& s : dev) counts[{s.domain, s.label}]++;
  CHECK(counts.size() == 6u);
  for (const auto& [key, n] : counts) CHECK(n == 5);
  CHECK_THROWS_AS(split_dev(train, 1.0, 3), ConfigError);
}
