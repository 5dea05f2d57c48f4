#include "safa/energy.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

#include "safa/errors.hpp"

namespace safa {

void LayerCostProfile::validate() const {
  if (!(flops >= 0.0)) throw FormatError("layer " + layer + ": flops must be >= 0");
  if (!(zeta >= 0.0 && zeta <= 1.0)) throw FormatError("layer " + layer + ": zeta must lie in [0, 1]");
  if (timesteps < 1) throw FormatError("layer " + layer + ": timesteps must be >= 1");
}

std::size_t flops_of_dense(std::size_t in_dim, std::size_t out_dim) {
  if (in_dim < 1 || out_dim < 1) throw DimensionError("flops_of_dense: dimensions must be >= 1");
  return in_dim * out_dim;
}

std::size_t flops_of_conv2d(std::size_t h, std::size_t w, std::size_t c_in, std::size_t c_out, std::size_t k,
                            std::size_t stride, std::size_t padding) {
  if (k < 1 || stride < 1 || c_in < 1 || c_out < 1) throw DimensionError("flops_of_conv2d: invalid geometry");
  const auto ph = h + 2 * padding;
  const auto pw = w + 2 * padding;
  if (ph < k || pw < k) throw DimensionError("flops_of_conv2d: kernel larger than padded input");
  const auto out_h = (ph - k) / stride + 1;
  const auto out_w = (pw - k) / stride + 1;
  return out_h * out_w * c_out * c_in * k * k;
}

double sops(const LayerCostProfile& p) { return static_cast<double>(p.timesteps) * p.zeta * p.flops; }

EnergyReport energy_report(std::span<const LayerCostProfile> profiles, const EnergyConstants& constants) {
  if (profiles.empty()) throw FormatError("energy_report: no layer profiles");
  if (!(constants.e_mac > 0.0) || !(constants.e_ac > 0.0))
    throw ConfigError("energy", "per-operation energies must be positive");
  EnergyReport r;
  r.constants = constants;
  for (const auto& p : profiles) {
    p.validate();
    LayerEnergy e;
    e.layer = p.layer;
    e.sops = sops(p);
    e.flops = p.flops;
    e.snn_pj = constants.e_ac * e.sops;
    e.ann_pj = constants.e_mac * e.flops;
    e.ratio = e.ann_pj > 0.0 ? e.snn_pj / e.ann_pj : 0.0;
    // T*zeta < e_mac/e_ac, compared without dividing.
    e.snn_cheaper = static_cast<double>(p.timesteps) * p.zeta * constants.e_ac < constants.e_mac;
    r.total_snn_pj += e.snn_pj;
    r.total_ann_pj += e.ann_pj;
    r.layers.push_back(std::move(e));
  }
  return r;
}

std::string layer_kind_name(LayerKind k) { return k == LayerKind::dense ? "dense" : "conv2d"; }

LayerKind parse_layer_kind(const std::string& s) {
  if (s == "dense") return LayerKind::dense;
  if (s == "conv2d" || s == "conv2d-descriptor") return LayerKind::conv2d;
  throw FormatError("unknown layer kind '" + s + "'");
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <typename T>
T parse_number(const std::string& s, std::size_t line, const char* field) {
  T v{};
  const auto* end = s.data() + s.size();
  const auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end || s.empty())
    throw FormatError("line " + std::to_string(line) + ": bad " + field + " '" + s + "'");
  return v;
}

}  // namespace

std::vector<LayerCostProfile> read_profile_csv(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  std::vector<LayerCostProfile> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto cells = split_csv(line);
    if (!header) {
      if (cells != std::vector<std::string>{"layer", "kind", "flops", "zeta", "timesteps"})
        throw FormatError("line " + std::to_string(lineno) + ": expected header layer,kind,flops,zeta,timesteps");
      header = true;
      continue;
    }
    if (cells.size() != 5)
      throw FormatError("line " + std::to_string(lineno) + ": expected 5 fields, got " +
                        std::to_string(cells.size()));
    LayerCostProfile p;
    p.layer = cells[0];
    try {
      p.kind = parse_layer_kind(cells[1]);
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
    p.flops = parse_number<double>(cells[2], lineno, "flops");
    p.zeta = parse_number<double>(cells[3], lineno, "zeta");
    p.timesteps = parse_number<std::size_t>(cells[4], lineno, "timesteps");
    try {
      p.validate();
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(std::move(p));
  }
  if (!header) throw FormatError("line 1: empty profile (missing header)");
  if (out.empty()) throw FormatError("line " + std::to_string(lineno) + ": profile has no layer rows");
  return out;
}

void write_profile_csv(std::ostream& out, std::span<const LayerCostProfile> profiles) {
  out << "layer,kind,flops,zeta,timesteps\n";
  const auto old = out.precision(17);
  for (const auto& p : profiles)
    out << p.layer << ',' << layer_kind_name(p.kind) << ',' << p.flops << ',' << p.zeta << ',' << p.timesteps
        << '\n';
  out.precision(old);
}

}  // namespace safa
