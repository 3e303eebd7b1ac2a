#include "fghv/synthdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "fghv/errors.hpp"

namespace fghv {

namespace {

Vector random_unit(Index d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(d);
  do {
    for (Index i = 0; i < d; ++i) v(i) = normal(rng);
  } while (v.norm() < 1e-9);
  return v.normalized();
}

void validate(const SynthSpec& s) {
  if (s.n_domains < 2) {
    throw ConfigError("synthetic data needs at least 2 domains, got " +
                      std::to_string(s.n_domains));
  }
  if (s.d_in < 1) throw ConfigError("d_in must be positive");
  if (s.samples_per_class_per_domain < 1) {
    throw ConfigError("samples_per_class_per_domain must be positive");
  }
  if (!(s.real_coherence >= 0 && s.real_coherence <= 1)) {
    throw ConfigError("real_coherence must lie in [0, 1]");
  }
  if (!(s.attack_spread > 0)) throw ConfigError("attack_spread must be positive");
  if (!(s.noise_sigma >= 0)) throw ConfigError("noise_sigma must be nonnegative");
  if (s.attack_types < 1) throw ConfigError("attack_types must be positive");
  if (s.test_domain() >= s.n_domains) {
    throw ConfigError("held_out_domain out of range");
  }
}

}  // namespace

const std::vector<std::string>& SynthSpec::keys() {
  static const std::vector<std::string> k = {
      "d_in",          "n_domains",   "samples_per_class_per_domain",
      "real_coherence", "attack_spread", "noise_sigma",
      "attack_types",  "held_out_domain",
      "seed"};
  return k;
}

SynthSpec SynthSpec::from(const KeyValues& kv) {
  SynthSpec s;
  s.d_in = static_cast<int>(kv.get_int("d_in", s.d_in));
  s.n_domains = static_cast<int>(kv.get_int("n_domains", s.n_domains));
  s.samples_per_class_per_domain = static_cast<int>(
      kv.get_int("samples_per_class_per_domain", s.samples_per_class_per_domain));
  s.real_coherence = kv.get_double("real_coherence", s.real_coherence);
  s.attack_spread = kv.get_double("attack_spread", s.attack_spread);
  s.noise_sigma = kv.get_double("noise_sigma", s.noise_sigma);
  s.attack_types = static_cast<int>(kv.get_int("attack_types", s.attack_types));
  s.held_out_domain = static_cast<int>(kv.get_int("held_out_domain", s.held_out_domain));
  s.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(s.seed)));
  return s;
}

KeyValues SynthSpec::to_key_values() const {
  KeyValues kv;
  kv.set("d_in", std::to_string(d_in));
  kv.set("n_domains", std::to_string(n_domains));
  kv.set("samples_per_class_per_domain", std::to_string(samples_per_class_per_domain));
  kv.set("real_coherence", format_double(real_coherence));
  kv.set("attack_spread", format_double(attack_spread));
  kv.set("noise_sigma", format_double(noise_sigma));
  kv.set("attack_types", std::to_string(attack_types));
  kv.set("held_out_domain", std::to_string(held_out_domain));
  kv.set("seed", std::to_string(seed));
  return kv;
}

SynthSplit generate(const SynthSpec& spec) {
  validate(spec);
  const Index d = spec.d_in;
  std::mt19937_64 rng(spec.seed);

  const Vector shared = random_unit(d, rng);
  std::vector<Vector> real_centers;
  std::vector<std::vector<Vector>> attack_centers;
  for (int dom = 0; dom < spec.n_domains; ++dom) {
    const Vector own = random_unit(d, rng);
    Vector c = spec.real_coherence * shared + (1.0 - spec.real_coherence) * own;
    if (c.norm() < 1e-9) c = shared;
    real_centers.push_back(c.normalized());
    std::vector<Vector> attacks;
    for (int k = 0; k < spec.attack_types; ++k) {
      attacks.push_back(
          (real_centers.back() + spec.attack_spread * random_unit(d, rng)).normalized());
    }
    attack_centers.push_back(std::move(attacks));
  }

  std::uniform_real_distribution<double> magnitude(0.8, 1.2);
  std::normal_distribution<double> noise(0.0, 1.0);
  auto draw = [&](const Vector& center) {
    Vector x = magnitude(rng) * center;
    if (spec.noise_sigma > 0) {
      for (Index i = 0; i < d; ++i) x(i) += spec.noise_sigma * noise(rng);
    }
    return x;
  };

  SynthSplit out;
  const int test_domain = spec.test_domain();
  for (int dom = 0; dom < spec.n_domains; ++dom) {
    auto& dst = dom == test_domain ? out.test : out.train;
    for (int i = 0; i < spec.samples_per_class_per_domain; ++i) {
      dst.push_back({draw(real_centers[dom]), 1, dom});
    }
    for (int i = 0; i < spec.samples_per_class_per_domain; ++i) {
      const auto& centers = attack_centers[dom];
      dst.push_back({draw(centers[static_cast<std::size_t>(i) % centers.size()]), 0, dom});
    }
  }
  return out;
}

std::pair<std::vector<Sample>, std::vector<Sample>> split_dev(
    std::vector<Sample> samples, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0 && fraction < 1)) {
    throw ConfigError("dev fraction must lie in [0, 1)");
  }
  std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    groups[{samples[i].domain, samples[i].label}].push_back(i);
  }
  std::vector<bool> to_dev(samples.size(), false);
  std::mt19937_64 rng(seed);
  for (auto& [key, idx] : groups) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto k = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(idx.size())));
    for (std::size_t j = 0; j < k; ++j) to_dev[idx[j]] = true;
  }
  std::vector<Sample> keep, dev;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (to_dev[i] ? dev : keep).push_back(std::move(samples[i]));
  }
  return {std::move(keep), std::move(dev)};
}

void write_dataset(const std::vector<Sample>& samples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  const Index d = samples.empty() ? 0 : samples.front().x.size();
  out << "label,domain";
  for (Index i = 0; i < d; ++i) out << ",x" << i;
  out << '\n';
  char buf[40];
  for (const auto& s : samples) {
    if (s.x.size() != d) throw DataError("samples have inconsistent dimensions");
    out << s.label << ',' << s.domain;
    for (Index i = 0; i < d; ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", s.x(i));
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

std::vector<Sample> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  std::vector<Sample> out;
  std::string line;
  Index width = -1;
  auto error = [&](int lineno, const std::string& what) {
    return ParseError(path.string() + ":" + std::to_string(lineno) + ": " + what);
  };
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("label", 0) == 0) {
      width = static_cast<Index>(std::count(line.begin(), line.end(), ',')) - 1;
      continue;
    }
    std::vector<double> fields;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (true) {
      double v = 0;
      const auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc()) throw error(lineno, "field " + std::to_string(fields.size()) + " is not a number");
      fields.push_back(v);
      if (next == end) break;
      if (*next != ',') throw error(lineno, "unexpected character '" + std::string(1, *next) + "'");
      p = next + 1;
    }
    if (fields.size() < 3) throw error(lineno, "need label, domain and at least one value");
    Sample s;
    if (fields[0] != 0 && fields[0] != 1) throw error(lineno, "label must be 0 or 1");
    if (fields[1] != std::floor(fields[1]) || fields[1] < 0) {
      throw error(lineno, "domain must be a nonnegative integer");
    }
    s.label = static_cast<int>(fields[0]);
    s.domain = static_cast<int>(fields[1]);
    s.x = Eigen::Map<const Vector>(fields.data() + 2, static_cast<Index>(fields.size() - 2));
    if (width >= 0 && s.x.size() != width) {
      throw error(lineno, "expected " + std::to_string(width) + " values, got " +
                              std::to_string(s.x.size()));
    }
    if (!s.x.allFinite()) throw error(lineno, "non-finite value");
    width = s.x.size();
    out.push_back(std::move(s));
  }
  return out;
}

Matrix stack_inputs(const std::vector<Sample>& samples) {
  if (samples.empty()) return Matrix(0, 0);
  Matrix m(static_cast<Index>(samples.size()), samples.front().x.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].x.size() != m.cols()) throw DataError("samples have inconsistent dimensions");
    m.row(static_cast<Index>(i)) = samples[i].x.transpose();
  }
  return m;
}

}  // namespace fghv
