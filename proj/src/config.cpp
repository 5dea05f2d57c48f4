#include "safa/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "safa/errors.hpp"
#include "safa/hash.hpp"

namespace safa {

namespace {

std::string fmt_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& field, const std::string& v) {
  const auto t = trim(v);
  double out = 0.0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty() || !std::isfinite(out))
    throw ConfigError(field, "expected a finite number, got '" + v + "'");
  return out;
}

std::uint64_t parse_uint(const std::string& field, const std::string& v) {
  const auto t = trim(v);
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty())
    throw ConfigError(field, "expected a non-negative integer, got '" + v + "'");
  return out;
}

int parse_int(const std::string& field, const std::string& v) {
  const auto t = trim(v);
  int out = 0;
  const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || p != t.data() + t.size() || t.empty())
    throw ConfigError(field, "expected an integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& field, const std::string& v) {
  const auto t = trim(v);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(field, "expected true or false, got '" + v + "'");
}

std::vector<std::size_t> parse_sizes(const std::string& field, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_uint(field, item));
  if (out.empty()) throw ConfigError(field, "expected a comma-separated list of sizes");
  return out;
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

using FieldTable = std::vector<std::pair<std::string, Field>>;

#define SAFA_NUM(key, member)                                                              \
  {key, {[](ExperimentConfig& c, const std::string& v) { c.member = parse_double(key, v); }, \
         [](const ExperimentConfig& c) { return fmt_double(c.member); }}}
#define SAFA_UINT(key, member)                                                           \
  {key, {[](ExperimentConfig& c, const std::string& v) { c.member = parse_uint(key, v); }, \
         [](const ExperimentConfig& c) { return std::to_string(c.member); }}}
#define SAFA_BOOL(key, member)                                                           \
  {key, {[](ExperimentConfig& c, const std::string& v) { c.member = parse_bool(key, v); }, \
         [](const ExperimentConfig& c) { return std::string(c.member ? "true" : "false"); }}}

// Canonical field order; sections appear in the order of their first key.
const FieldTable& fields() {
  static const FieldTable table = {
      {"dataset.kind",
       {[](ExperimentConfig& c, const std::string& v) {
          const auto t = trim(v);
          if (t == "synthetic")
            c.dataset.kind = DatasetKind::synthetic;
          else if (t == "flat")
            c.dataset.kind = DatasetKind::flat;
          else
            throw ConfigError("dataset.kind", "expected synthetic or flat, got '" + v + "'");
        },
        [](const ExperimentConfig& c) {
          return std::string(c.dataset.kind == DatasetKind::synthetic ? "synthetic" : "flat");
        }}},
      {"dataset.manifest",
       {[](ExperimentConfig& c, const std::string& v) { c.dataset.manifest = trim(v); },
        [](const ExperimentConfig& c) { return c.dataset.manifest; }}},
      SAFA_UINT("dataset.classes", dataset.synthetic.classes),
      SAFA_UINT("dataset.feature_dim", dataset.synthetic.feature_dim),
      SAFA_NUM("dataset.radius", dataset.synthetic.radius),
      SAFA_NUM("dataset.stddev", dataset.synthetic.stddev),
      SAFA_UINT("dataset.train_per_class", dataset.synthetic.train_per_class),
      SAFA_UINT("dataset.test_per_class", dataset.synthetic.test_per_class),
      SAFA_UINT("dataset.base_classes", dataset.synthetic.base_classes),
      SAFA_BOOL("dataset.index_order", dataset.index_order),

      {"model.hidden",
       {[](ExperimentConfig& c, const std::string& v) { c.network.hidden = parse_sizes("model.hidden", v); },
        [](const ExperimentConfig& c) {
          std::string s;
          for (std::size_t i = 0; i < c.network.hidden.size(); ++i)
            s += (i ? "," : "") + std::to_string(c.network.hidden[i]);
          return s;
        }}},
      SAFA_UINT("model.timesteps", train.loss.timesteps),
      SAFA_NUM("model.tau", network.lif.tau),
      SAFA_NUM("model.theta_init", network.lif.theta_init),
      {"model.reset",
       {[](ExperimentConfig& c, const std::string& v) {
          const auto t = trim(v);
          if (t == "zero")
            c.network.lif.reset = ResetMode::to_zero;
          else if (t == "subtract")
            c.network.lif.reset = ResetMode::by_subtraction;
          else
            throw ConfigError("model.reset", "expected zero or subtract, got '" + v + "'");
        },
        [](const ExperimentConfig& c) {
          return std::string(c.network.lif.reset == ResetMode::to_zero ? "zero" : "subtract");
        }}},
      SAFA_NUM("model.u_reset", network.lif.u_reset),
      SAFA_NUM("model.eta", network.eta),
      SAFA_BOOL("model.prefix_mask", network.prefix_mask),
      SAFA_NUM("model.init_scale", network.init_scale),
      {"model.spike_derivative",
       {[](ExperimentConfig& c, const std::string& v) {
          const auto t = trim(v);
          if (t == "zo")
            c.train.backward.derivative = SpikeDerivative::zeroth_order;
          else if (t == "gaussian")
            c.train.backward.derivative = SpikeDerivative::gaussian_surrogate;
          else if (t == "sigmoid")
            c.train.backward.derivative = SpikeDerivative::sigmoid_surrogate;
          else
            throw ConfigError("model.spike_derivative", "expected zo, gaussian or sigmoid, got '" + v + "'");
        },
        [](const ExperimentConfig& c) {
          switch (c.train.backward.derivative) {
            case SpikeDerivative::gaussian_surrogate: return std::string("gaussian");
            case SpikeDerivative::sigmoid_surrogate: return std::string("sigmoid");
            default: return std::string("zo");
          }
        }}},
      SAFA_NUM("model.sigmoid_k", train.backward.sigmoid_k),
      SAFA_NUM("model.beta", fscil.thresholds.adapt.beta),
      SAFA_NUM("model.gamma_mask", fscil.thresholds.adapt.gamma_mask),
      {"model.passes",
       {[](ExperimentConfig& c, const std::string& v) {
          c.fscil.thresholds.adapt.passes = parse_int("model.passes", v);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.fscil.thresholds.adapt.passes); }}},
      {"model.threshold_update_sign",
       {[](ExperimentConfig& c, const std::string& v) {
          c.fscil.thresholds.sign = parse_int("model.threshold_update_sign", v);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.fscil.thresholds.sign); }}},
      {"model.threshold_floor",
       {[](ExperimentConfig& c, const std::string& v) {
          if (trim(v) == "none")
            c.fscil.thresholds.floor.reset();
          else
            c.fscil.thresholds.floor = parse_double("model.threshold_floor", v);
        },
        [](const ExperimentConfig& c) {
          return c.fscil.thresholds.floor ? fmt_double(*c.fscil.thresholds.floor) : std::string("none");
        }}},

      SAFA_NUM("optimizer.lr", train.lr),
      SAFA_UINT("optimizer.batch", train.batch),
      SAFA_UINT("optimizer.epochs", train.epochs),
      SAFA_NUM("optimizer.lambda", train.loss.lambda),
      {"optimizer.mse_target",
       {[](ExperimentConfig& c, const std::string& v) {
          const auto t = trim(v);
          if (t == "softmax")
            c.train.loss.mse_target = MseTarget::softmax;
          else if (t == "raw")
            c.train.loss.mse_target = MseTarget::raw_membrane;
          else
            throw ConfigError("optimizer.mse_target", "expected softmax or raw, got '" + v + "'");
        },
        [](const ExperimentConfig& c) {
          return std::string(c.train.loss.mse_target == MseTarget::softmax ? "softmax" : "raw");
        }}},
      SAFA_NUM("optimizer.rate_ema", train.rate_ema),

      SAFA_NUM("zo.delta", train.zo.delta),
      SAFA_UINT("zo.samples", train.zo.samples_b),
      SAFA_BOOL("zo.mask_gradients", train.zo.mask_gradients),

      SAFA_UINT("fscil.sessions", dataset.synthetic.sessions),
      SAFA_UINT("fscil.way", dataset.synthetic.way),
      SAFA_UINT("fscil.shot", dataset.synthetic.shot),
      SAFA_NUM("fscil.alpha", fscil.alpha),
      SAFA_NUM("fscil.projector_jitter", fscil.projector_jitter),

      SAFA_UINT("run.seed", seed),
  };
  return table;
}

#undef SAFA_NUM
#undef SAFA_UINT
#undef SAFA_BOOL

const Field* find_field(const std::string& key) {
  for (const auto& [k, f] : fields())
    if (k == key) return &f;
  return nullptr;
}

// Keys that change nothing about a trained base checkpoint.
bool incremental_only(const std::string& key) {
  return key == "fscil.alpha" || key == "model.beta" || key == "model.gamma_mask" || key == "model.passes" ||
         key == "model.threshold_update_sign" || key == "model.threshold_floor";
}

}  // namespace

void ExperimentConfig::validate() const {
  const auto& s = dataset.synthetic;
  if (dataset.kind == DatasetKind::flat && dataset.manifest.empty())
    throw ConfigError("dataset.manifest", "required when dataset.kind = flat");
  if (dataset.kind == DatasetKind::synthetic) s.validate();
  if (s.base_classes < 1) throw ConfigError("dataset.base_classes", "must be >= 1");
  if (s.sessions > 0 && (s.way < 1 || s.shot < 1)) throw ConfigError("fscil.way", "way and shot must be >= 1");
  network.validate();
  if (network.hidden.back() < s.base_classes)
    throw ConfigError("model.hidden", "last hidden layer (" + std::to_string(network.hidden.back()) +
                                          ") must be at least dataset.base_classes for the base projector");
  if (!(network.eta > 0.0 && network.eta < 1.0)) throw ConfigError("model.eta", "must lie in (0, 1)");
  for (auto h : network.hidden)
    if (static_cast<std::size_t>(std::floor(network.eta * static_cast<double>(h))) == 0)
      throw ConfigError("model.eta", "selects no adaptive channel in a layer of " + std::to_string(h));
  if (train.backward.derivative == SpikeDerivative::sigmoid_surrogate && !(train.backward.sigmoid_k > 0.0))
    throw ConfigError("model.sigmoid_k", "must be positive");
  train.validate();
  fscil.thresholds.adapt.validate();
  if (fscil.thresholds.sign != 1 && fscil.thresholds.sign != -1)
    throw ConfigError("model.threshold_update_sign", "must be +1 or -1");
  if (fscil.thresholds.floor && !(*fscil.thresholds.floor >= 0.0))
    throw ConfigError("model.threshold_floor", "must be >= 0 or none");
  if (!(fscil.alpha >= 0.0 && fscil.alpha <= 1.0)) throw ConfigError("fscil.alpha", "must lie in [0, 1]");
  if (!(fscil.projector_jitter >= 0.0)) throw ConfigError("fscil.projector_jitter", "must be >= 0");
}

FscilExperiment ExperimentConfig::experiment() const {
  FscilExperiment e;
  e.network = network;
  e.network.input_dim = dataset.synthetic.feature_dim;
  e.network.classes = dataset.synthetic.base_classes;
  e.train = train;
  e.fscil = fscil;
  e.seed = seed;
  return e;
}

std::string ExperimentConfig::canonical_text() const {
  std::string out;
  std::string section;
  for (const auto& [key, f] : fields()) {
    const auto dot = key.find('.');
    const auto sec = key.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "[" : "\n[") + sec + "]\n";
      section = sec;
    }
    out += key.substr(dot + 1) + " = " + f.get(*this) + "\n";
  }
  return out;
}

std::uint64_t ExperimentConfig::fingerprint() const {
  std::uint64_t h = fnv1a(std::string_view("safa-config/1"));
  for (const auto& [key, f] : fields()) {
    if (incremental_only(key)) continue;
    h = fnv1a(key + "=" + f.get(*this) + "\n", h);
  }
  return h;
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError(assignment, "override must look like section.key=value");
  const auto key = trim(assignment.substr(0, eq));
  const auto* f = find_field(key);
  if (!f) throw ConfigError(key, "unknown configuration key");
  f->set(cfg, assignment.substr(eq + 1));
}

ExperimentConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config", "line " + std::to_string(e.line()) + ": " + e.message());
  }
  ExperimentConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ConfigError(section, "key outside of any section");
    for (const auto& [key, value] : body) {
      const auto full = section + "." + key;
      const auto* f = find_field(full);
      if (!f) throw ConfigError(full, "unknown configuration key");
      f->set(cfg, value.data());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

FscilStream make_stream(const ExperimentConfig& cfg) {
  const auto& s = cfg.dataset.synthetic;
  if (cfg.dataset.kind == DatasetKind::synthetic) return gen_synthetic_stream(s, cfg.seed, nullptr, cfg.dataset.index_order);
  const Dataset ds = load_flat_dataset(cfg.dataset.manifest);
  if (ds.feature_dim() != s.feature_dim)
    throw ConfigError("dataset.feature_dim", "config says " + std::to_string(s.feature_dim) + ", dataset has " +
                                                 std::to_string(ds.feature_dim()));
  RngStream split_rng(cfg.seed, streams::kSplit);
  return build_splits(ds, s.base_classes, s.sessions, s.way, s.shot, split_rng, cfg.dataset.index_order);
}

}  // namespace safa
