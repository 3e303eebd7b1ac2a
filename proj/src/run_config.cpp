#include <sstream>

#include "fghv/errors.hpp"
#include "fghv/harness.hpp"

namespace fghv {

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : ",") + p;
  return out;
}

}  // namespace

const std::vector<ConfigKey>& RunConfig::keys() {
  static const std::vector<ConfigKey> k = {
      {"lambda1", "weight of the relative correlation term", true},
      {"lambda2", "weight of the distribution discrimination term", true},
      {"constraints", "enabled loss terms, subset of var,rcc,ddc", false},
      {"generators", "enabled generators, subset of real,attack", false},
      {"hypotheses", "hypotheses sampled per input (N)", true},
      {"ghvm_iterations", "latent search iterations (M)", true},
      {"ghvm_step", "latent search step length (alpha)", true},
      {"sigma_floor", "floor on the latent std estimate", false},
      {"learning_rate", "initial SGD learning rate", true},
      {"learning_rate_late", "learning rate after lr_drop_epoch", true},
      {"lr_drop_epoch", "last epoch at the initial learning rate", true},
      {"momentum", "SGD momentum", true},
      {"weight_decay", "SGD weight decay", true},
      {"epochs", "training epochs", false},
      {"batch_size", "samples per batch", false},
      {"seed", "training seed", false},
      {"latent_dim", "latent dimension", false},
      {"generator_hidden", "generator hidden width", false},
      {"feature_dim", "feature dimension", false},
      {"extractor_hidden", "extractor hidden widths, comma separated", false},
      {"leaky_slope", "leaky ReLU slope", false},
      {"train_data", "training dataset path", false},
      {"checkpoint", "checkpoint path", false},
      {"log", "training log path", false},
  };
  return k;
}

std::string RunConfig::constraints_string() const {
  std::vector<std::string> parts;
  if (use_var) parts.push_back("var");
  if (use_rcc) parts.push_back("rcc");
  if (use_ddc) parts.push_back("ddc");
  return join(parts);
}

std::string RunConfig::generators_string() const {
  std::vector<std::string> parts;
  if (real_generator) parts.push_back("real");
  if (attack_generator) parts.push_back("attack");
  return join(parts);
}

RunConfig RunConfig::from(const KeyValues& kv) {
  std::vector<std::string> known;
  for (const auto& k : keys()) known.push_back(k.name);
  kv.require_known(known);

  RunConfig c;
  c.lambda1 = kv.get_double("lambda1", c.lambda1);
  c.lambda2 = kv.get_double("lambda2", c.lambda2);
  if (const auto* v = kv.find("constraints")) {
    c.use_var = c.use_rcc = c.use_ddc = false;
    for (const auto& item : split_list(*v)) {
      if (item == "var") c.use_var = true;
      else if (item == "rcc") c.use_rcc = true;
      else if (item == "ddc") c.use_ddc = true;
      else if (item != "none") throw ConfigError("unknown constraint '" + item + "'");
    }
  }
  if (const auto* v = kv.find("generators")) {
    c.real_generator = c.attack_generator = false;
    for (const auto& item : split_list(*v)) {
      if (item == "real") c.real_generator = true;
      else if (item == "attack") c.attack_generator = true;
      else if (item != "none") throw ConfigError("unknown generator '" + item + "'");
    }
  }
  c.hypotheses = static_cast<int>(kv.get_int("hypotheses", c.hypotheses));
  c.ghvm_iterations = static_cast<int>(kv.get_int("ghvm_iterations", c.ghvm_iterations));
  c.ghvm_step = kv.get_double("ghvm_step", c.ghvm_step);
  c.sigma_floor = kv.get_double("sigma_floor", c.sigma_floor);
  c.learning_rate = kv.get_double("learning_rate", c.learning_rate);
  c.learning_rate_late = kv.get_double("learning_rate_late", c.learning_rate_late);
  c.lr_drop_epoch = static_cast<int>(kv.get_int("lr_drop_epoch", c.lr_drop_epoch));
  c.momentum = kv.get_double("momentum", c.momentum);
  c.weight_decay = kv.get_double("weight_decay", c.weight_decay);
  c.epochs = static_cast<int>(kv.get_int("epochs", c.epochs));
  c.batch_size = static_cast<int>(kv.get_int("batch_size", c.batch_size));
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
  c.latent_dim = static_cast<int>(kv.get_int("latent_dim", c.latent_dim));
  c.generator_hidden = static_cast<int>(kv.get_int("generator_hidden", c.generator_hidden));
  c.feature_dim = static_cast<int>(kv.get_int("feature_dim", c.feature_dim));
  if (const auto* v = kv.find("extractor_hidden")) {
    c.extractor_hidden.clear();
    for (const auto& item : split_list(*v)) {
      KeyValues one({{"w", item}});
      c.extractor_hidden.push_back(static_cast<int>(one.get_int("w", 0)));
    }
  }
  c.leaky_slope = kv.get_double("leaky_slope", c.leaky_slope);
  c.train_data = kv.get_string("train_data", c.train_data);
  c.checkpoint = kv.get_string("checkpoint", c.checkpoint);
  c.log = kv.get_string("log", c.log);
  return c;
}

KeyValues RunConfig::to_key_values() const {
  KeyValues kv;
  kv.set("lambda1", format_double(lambda1));
  kv.set("lambda2", format_double(lambda2));
  kv.set("constraints", use_var || use_rcc || use_ddc ? constraints_string() : "none");
  kv.set("generators", real_generator || attack_generator ? generators_string() : "none");
  kv.set("hypotheses", std::to_string(hypotheses));
  kv.set("ghvm_iterations", std::to_string(ghvm_iterations));
  kv.set("ghvm_step", format_double(ghvm_step));
  kv.set("sigma_floor", format_double(sigma_floor));
  kv.set("learning_rate", format_double(learning_rate));
  kv.set("learning_rate_late", format_double(learning_rate_late));
  kv.set("lr_drop_epoch", std::to_string(lr_drop_epoch));
  kv.set("momentum", format_double(momentum));
  kv.set("weight_decay", format_double(weight_decay));
  kv.set("epochs", std::to_string(epochs));
  kv.set("batch_size", std::to_string(batch_size));
  kv.set("seed", std::to_string(seed));
  kv.set("latent_dim", std::to_string(latent_dim));
  kv.set("generator_hidden", std::to_string(generator_hidden));
  kv.set("feature_dim", std::to_string(feature_dim));
  std::vector<std::string> widths;
  for (int w : extractor_hidden) widths.push_back(std::to_string(w));
  kv.set("extractor_hidden", join(widths));
  kv.set("leaky_slope", format_double(leaky_slope));
  kv.set("train_data", train_data);
  kv.set("checkpoint", checkpoint);
  kv.set("log", log);
  return kv;
}

void RunConfig::validate() const {
  if (!real_generator && (use_var || use_rcc || use_ddc)) {
    throw ConfigError("constraints '" + constraints_string() +
                      "' need the real generator, which is disabled");
  }
  if (!attack_generator && (use_rcc || use_ddc)) {
    throw ConfigError("rcc and ddc need the attack generator, which is disabled");
  }
  if (real_generator && baseline_objective()) {
    throw ConfigError("no constraint enabled; nothing to train the real generator with");
  }
  if (hypotheses < 2) throw ConfigError("hypotheses (N) must be at least 2");
  if (ghvm_iterations < 0) throw ConfigError("ghvm_iterations must be nonnegative");
  if (!(ghvm_step > 0)) throw ConfigError("ghvm_step must be positive");
  if (!(sigma_floor > 0)) throw ConfigError("sigma_floor must be positive");
  if (!(learning_rate > 0) || !(learning_rate_late > 0)) {
    throw ConfigError("learning rates must be positive");
  }
  if (!(momentum >= 0 && momentum < 1)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be nonnegative");
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (latent_dim < 1 || generator_hidden < 1 || feature_dim < 1) {
    throw ConfigError("model dimensions must be positive");
  }
  for (int w : extractor_hidden) {
    if (w < 1) throw ConfigError("extractor hidden widths must be positive");
  }
  if (!(leaky_slope > 0 && leaky_slope < 1)) {
    throw ConfigError("leaky_slope must lie in (0, 1)");
  }
}

}  // namespace fghv
