#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace safa {

// Energy per operation on 45nm hardware, in picojoules.
struct EnergyConstants {
  double e_mac = 4.6;
  double e_ac = 0.9;
};

enum class LayerKind { dense, conv2d };

struct LayerCostProfile {
  std::string layer;
  LayerKind kind = LayerKind::dense;
  double flops = 0.0;  // MACs per sample
  double zeta = 0.0;   // firing rate of the layer's input spike train
  std::size_t timesteps = 1;

  void validate() const;
};

// One FLOP is one multiply-accumulate.
std::size_t flops_of_dense(std::size_t in_dim, std::size_t out_dim);
std::size_t flops_of_conv2d(std::size_t h, std::size_t w, std::size_t c_in, std::size_t c_out, std::size_t k,
                            std::size_t stride, std::size_t padding);

// T * zeta * FLOPs, unrounded.
double sops(const LayerCostProfile& p);

struct LayerEnergy {
  std::string layer;
  double sops = 0.0;
  double flops = 0.0;
  double snn_pj = 0.0;
  double ann_pj = 0.0;
  double ratio = 0.0;  // snn / ann
  bool snn_cheaper = false;
};

struct EnergyReport {
  EnergyConstants constants;
  std::vector<LayerEnergy> layers;
  double total_snn_pj = 0.0;
  double total_ann_pj = 0.0;

  double total_snn_j() const { return total_snn_pj * 1e-12; }
  double total_ann_j() const { return total_ann_pj * 1e-12; }
};

EnergyReport energy_report(std::span<const LayerCostProfile> profiles, const EnergyConstants& constants = {});

std::string layer_kind_name(LayerKind k);
LayerKind parse_layer_kind(const std::string& s);

// CSV with header `layer,kind,flops,zeta,timesteps`. Malformed rows raise
// FormatError naming the line number.
std::vector<LayerCostProfile> read_profile_csv(std::istream& in);
void write_profile_csv(std::ostream& out, std::span<const LayerCostProfile> profiles);

}  // namespace safa
