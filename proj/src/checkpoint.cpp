#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "fghv/errors.hpp"
#include "fghv/models.hpp"

namespace fghv {

namespace {

constexpr const char* kMagic = "fghv-checkpoint";

struct NamedBlock {
  std::string name;
  Matrix value;
};

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Matrix as_row(const Vector& v) { return v.transpose(); }
Matrix as_scalar(double v) { return Matrix::Constant(1, 1, v); }

void append_generator(std::vector<NamedBlock>& out, const std::string& prefix,
                      const GeneratorParams& g) {
  out.push_back({prefix + ".slope", as_scalar(g.slope)});
  out.push_back({prefix + ".w1", g.w1});
  out.push_back({prefix + ".b1", as_row(g.b1)});
  out.push_back({prefix + ".w2", g.w2});
  out.push_back({prefix + ".b2", as_row(g.b2)});
}

std::vector<NamedBlock> flatten(const Checkpoint& ckpt) {
  std::vector<NamedBlock> out;
  out.push_back({"extractor.slope", as_scalar(ckpt.extractor.slope)});
  for (std::size_t i = 0; i < ckpt.extractor.layers.size(); ++i) {
    const auto& layer = ckpt.extractor.layers[i];
    const std::string p = "extractor." + std::to_string(i);
    out.push_back({p + ".weight", layer.weight});
    out.push_back({p + ".bias", as_row(layer.bias)});
  }
  append_generator(out, "real", ckpt.real_gen);
  append_generator(out, "attack", ckpt.attack_gen);
  return out;
}

void put_le(std::string& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>(bits & 0xff));
    bits >>= 8;
  }
}

double get_le(const char* p) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) {
    bits = (bits << 8) | static_cast<unsigned char>(p[i]);
  }
  return std::bit_cast<double>(bits);
}

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw LoadError("checkpoint " + path.string() + ": " + what);
}

std::string expect_line(std::istream& in, const std::filesystem::path& path,
                        const char* what) {
  std::string line;
  if (!std::getline(in, line)) fail(path, std::string("truncated header, missing ") + what);
  return line;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto blocks = flatten(ckpt);
  std::string payload;
  for (const auto& b : blocks)
    for (Index r = 0; r < b.value.rows(); ++r)
      for (Index c = 0; c < b.value.cols(); ++c) put_le(payload, b.value(r, c));

  std::ostringstream header;
  header << kMagic << '\n'
         << "version " << Checkpoint::kFormatVersion << '\n'
         << "config " << ckpt.config.size() << '\n';
  for (const auto& [k, v] : ckpt.config) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ConfigError("config entry '" + k + "' cannot be stored in a checkpoint");
    }
    header << k << '=' << v << '\n';
  }
  header << "tensors " << blocks.size() << '\n';
  for (const auto& b : blocks) {
    header << b.name << ' ' << b.value.rows() << ' ' << b.value.cols() << '\n';
  }
  header << "payload " << payload.size() << ' ' << std::hex << std::setw(16)
         << std::setfill('0') << fnv1a(payload) << '\n';

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << header.str();
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw Error("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");

  if (expect_line(in, path, "magic") != kMagic) fail(path, "not a checkpoint file");

  {
    std::istringstream ls(expect_line(in, path, "version"));
    std::string tag;
    int version = 0;
    if (!(ls >> tag >> version) || tag != "version") fail(path, "malformed version line");
    if (version != Checkpoint::kFormatVersion) {
      fail(path, "unsupported format version " + std::to_string(version) +
                     " (expected " + std::to_string(Checkpoint::kFormatVersion) + ")");
    }
  }

  Checkpoint ckpt;
  {
    std::istringstream ls(expect_line(in, path, "config count"));
    std::string tag;
    std::size_t n = 0;
    if (!(ls >> tag >> n) || tag != "config") fail(path, "malformed config line");
    for (std::size_t i = 0; i < n; ++i) {
      const std::string line = expect_line(in, path, "config entry");
      const auto eq = line.find('=');
      if (eq == std::string::npos) fail(path, "malformed config entry '" + line + "'");
      ckpt.config.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
  }

  std::vector<NamedBlock> blocks;
  {
    std::istringstream ls(expect_line(in, path, "tensor count"));
    std::string tag;
    std::size_t n = 0;
    if (!(ls >> tag >> n) || tag != "tensors") fail(path, "malformed tensors line");
    for (std::size_t i = 0; i < n; ++i) {
      std::istringstream ts(expect_line(in, path, "tensor entry"));
      NamedBlock b;
      Index rows = 0, cols = 0;
      if (!(ts >> b.name >> rows >> cols) || rows < 0 || cols < 0) {
        fail(path, "malformed tensor entry " + std::to_string(i));
      }
      b.value.resize(rows, cols);
      blocks.push_back(std::move(b));
    }
  }

  std::size_t expected_bytes = 0;
  std::uint64_t expected_hash = 0;
  {
    std::istringstream ls(expect_line(in, path, "payload"));
    std::string tag;
    if (!(ls >> tag >> expected_bytes >> std::hex >> expected_hash) || tag != "payload") {
      fail(path, "malformed payload line");
    }
  }
  std::size_t needed = 0;
  for (const auto& b : blocks) needed += static_cast<std::size_t>(b.value.size()) * 8;
  if (needed != expected_bytes) fail(path, "payload size disagrees with tensor shapes");

  std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (payload.size() < expected_bytes) {
    fail(path, "truncated payload: " + std::to_string(payload.size()) + " of " +
                   std::to_string(expected_bytes) + " bytes");
  }
  if (payload.size() > expected_bytes) fail(path, "trailing bytes after payload");
  if (fnv1a(payload) != expected_hash) fail(path, "payload checksum mismatch");

  std::size_t offset = 0;
  for (auto& b : blocks) {
    for (Index r = 0; r < b.value.rows(); ++r)
      for (Index c = 0; c < b.value.cols(); ++c, offset += 8)
        b.value(r, c) = get_le(payload.data() + offset);
  }

  std::size_t cursor = 0;
  auto take = [&](const std::string& name) -> const Matrix& {
    if (cursor >= blocks.size() || blocks[cursor].name != name) {
      fail(path, "expected tensor '" + name + "'");
    }
    return blocks[cursor++].value;
  };
  auto take_scalar = [&](const std::string& name) {
    const Matrix& m = take(name);
    if (m.size() != 1) fail(path, "tensor '" + name + "' must be 1x1");
    return m(0, 0);
  };
  auto take_row = [&](const std::string& name) -> Vector {
    const Matrix& m = take(name);
    if (m.rows() != 1) fail(path, "tensor '" + name + "' must be a single row");
    return m.row(0).transpose();
  };

  ckpt.extractor.slope = take_scalar("extractor.slope");
  for (std::size_t i = 0;
       cursor < blocks.size() && blocks[cursor].name.rfind("extractor.", 0) == 0; ++i) {
    const std::string p = "extractor." + std::to_string(i);
    DenseLayer layer;
    layer.weight = take(p + ".weight");
    layer.bias = take_row(p + ".bias");
    if (layer.bias.size() != layer.weight.rows()) fail(path, p + " bias/weight mismatch");
    if (!ckpt.extractor.layers.empty() &&
        ckpt.extractor.layers.back().weight.rows() != layer.weight.cols()) {
      fail(path, p + " input width does not match previous layer");
    }
    ckpt.extractor.layers.push_back(std::move(layer));
  }
  if (ckpt.extractor.layers.empty()) fail(path, "extractor has no layers");

  auto take_generator = [&](const std::string& prefix) {
    GeneratorParams g;
    g.slope = take_scalar(prefix + ".slope");
    g.w1 = take(prefix + ".w1");
    g.b1 = take_row(prefix + ".b1");
    g.w2 = take(prefix + ".w2");
    g.b2 = take_row(prefix + ".b2");
    if (g.b1.size() != g.w1.rows() || g.w2.cols() != g.w1.rows() ||
        g.b2.size() != g.w2.rows()) {
      fail(path, prefix + " generator shapes are inconsistent");
    }
    return g;
  };
  ckpt.real_gen = take_generator("real");
  ckpt.attack_gen = take_generator("attack");
  if (cursor != blocks.size()) fail(path, "unexpected extra tensors");
  return ckpt;
}

}  // namespace fghv
