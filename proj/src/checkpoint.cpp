#include "safa/checkpoint.hpp"

#include "bytes.hpp"
#include "safa/errors.hpp"
#include "safa/hash.hpp"

namespace safa {

namespace {

constexpr char kMagic[16] = {'S', 'A', 'F', 'A', 'S', 'N', 'N', '-', 'C', 'K', 0, 0, 0, 0, 0, 0};
constexpr std::uint32_t kVersion = 1;

void put_tensor(detail::ByteWriter& w, const Tensor& t) {
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.u64(d);
  for (double v : t.data()) w.f64(v);
}

Tensor get_tensor(detail::ByteReader& r) {
  const auto rank = r.u32();
  if (rank == 0 || rank > 2) throw FormatError("tensor block with rank " + std::to_string(rank));
  Shape shape(rank);
  std::size_t n = 1;
  for (auto& d : shape) {
    d = r.u64();
    if (d == 0 || d > (std::size_t{1} << 32)) throw FormatError("tensor block with dimension " + std::to_string(d));
    n *= d;
  }
  std::vector<double> data(n);
  for (auto& v : data) v = r.f64();
  return Tensor(std::move(shape), std::move(data));
}

void expect_shape(const Tensor& t, const Shape& s, const char* what) {
  if (t.shape() != s)
    throw FormatError(std::string(what) + " has shape " + shape_string(t.shape()) + ", expected " + shape_string(s));
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelCheckpoint& ck) {
  detail::ByteWriter w;
  w.raw(std::string_view(kMagic, sizeof kMagic));
  w.u32(kVersion);
  w.u64(ck.fingerprint);
  w.u64(ck.config_snapshot.size());
  w.raw(ck.config_snapshot);

  const auto& net = ck.net;
  w.u64(ck.timesteps);
  w.u64(ck.session);
  w.u32(static_cast<std::uint32_t>(net.hidden.size()));
  w.u32(net.lif.reset == ResetMode::to_zero ? 0 : 1);
  w.u32(net.spike == SpikeFunction::heaviside ? 0 : 1);
  w.f64(net.lif.tau);
  w.f64(net.lif.theta_init);
  w.f64(net.lif.u_reset);
  w.f64(ck.bank.alpha);
  w.u32(ck.base_rates.empty() ? 0 : 1);

  for (std::size_t l = 0; l < net.hidden.size(); ++l) {
    const auto& layer = net.hidden[l];
    w.f64(layer.mask.eta);
    put_tensor(w, layer.weights);
    put_tensor(w, layer.bias);
    put_tensor(w, layer.thresholds);
    put_tensor(w, layer.mask.bits);
    if (!ck.base_rates.empty()) put_tensor(w, ck.base_rates[l]);
  }
  put_tensor(w, net.readout_weights);
  put_tensor(w, net.readout_bias);

  put_tensor(w, ck.bank.base);
  put_tensor(w, ck.bank.projector);
  w.u64(ck.bank.fused.size());
  for (std::size_t i = 0; i < ck.bank.fused.size(); ++i) {
    put_tensor(w, ck.bank.novel[i]);
    put_tensor(w, ck.bank.fused_raw[i]);
    put_tensor(w, ck.bank.fused[i]);
  }

  auto& bytes = w.bytes();
  const auto sum = fnv1a(bytes);
  w.u64(sum);
  return std::move(bytes);
}

ModelCheckpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  try {
    if (bytes.size() < sizeof kMagic + 4 + 8)
      throw FormatError("file is " + std::to_string(bytes.size()) + " bytes, too short for a checkpoint header");
    const std::size_t body = bytes.size() - 8;
    detail::ByteReader tail(bytes, bytes.size());
    tail.raw(body);
    const auto stored = tail.u64();
    const auto actual = fnv1a(std::span(bytes).first(body));
    if (stored != actual) throw IntegrityError("checksum " + to_hex(actual) + " differs from stored " + to_hex(stored));

    detail::ByteReader r(bytes, body);
    if (r.raw(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic)) throw FormatError("bad magic");
    const auto version = r.u32();
    if (version != kVersion) throw FormatError("unsupported version " + std::to_string(version));

    ModelCheckpoint ck;
    ck.fingerprint = r.u64();
    const auto snap_len = r.u64();
    if (snap_len > body) throw FormatError("config snapshot length out of range");
    ck.config_snapshot = r.raw(snap_len);
    ck.timesteps = r.u64();
    ck.session = r.u64();
    const auto layers = r.u32();
    if (layers == 0 || layers > 1024) throw FormatError("layer count " + std::to_string(layers));
    auto& net = ck.net;
    net.lif.reset = r.u32() == 0 ? ResetMode::to_zero : ResetMode::by_subtraction;
    net.spike = r.u32() == 0 ? SpikeFunction::heaviside : SpikeFunction::identity;
    net.lif.tau = r.f64();
    net.lif.theta_init = r.f64();
    net.lif.u_reset = r.f64();
    ck.bank.alpha = r.f64();
    const bool has_rates = r.u32() != 0;

    std::size_t in_dim = 0;
    for (std::uint32_t l = 0; l < layers; ++l) {
      LifLayerState layer;
      layer.mask.eta = r.f64();
      layer.weights = get_tensor(r);
      if (layer.weights.rank() != 2) throw FormatError("layer weights must be a matrix");
      if (l > 0 && layer.weights.rows() != in_dim) throw FormatError("layer " + std::to_string(l) + " input mismatch");
      const Shape vec{layer.weights.cols()};
      layer.bias = get_tensor(r);
      expect_shape(layer.bias, vec, "bias");
      layer.thresholds = get_tensor(r);
      expect_shape(layer.thresholds, vec, "thresholds");
      layer.mask.bits = get_tensor(r);
      expect_shape(layer.mask.bits, vec, "mask");
      for (double b : layer.mask.bits.data())
        if (b != 0.0 && b != 1.0) throw FormatError("mask entries must be 0 or 1");
      if (has_rates) {
        ck.base_rates.push_back(get_tensor(r));
        expect_shape(ck.base_rates.back(), vec, "base rates");
      }
      layer.membrane = Tensor(vec);
      layer.firing_counts = Tensor(vec);
      in_dim = layer.weights.cols();
      net.hidden.push_back(std::move(layer));
    }
    net.readout_weights = get_tensor(r);
    if (net.readout_weights.rank() != 2 || net.readout_weights.rows() != in_dim)
      throw FormatError("readout weights do not match the last hidden layer");
    net.readout_bias = get_tensor(r);
    expect_shape(net.readout_bias, {net.readout_weights.cols()}, "readout bias");

    ck.bank.base = get_tensor(r);
    if (ck.bank.base.rank() != 2 || ck.bank.base.cols() != in_dim)
      throw FormatError("base prototypes do not match the feature dimension");
    ck.bank.projector = get_tensor(r);
    expect_shape(ck.bank.projector, {in_dim, in_dim}, "projector");
    const auto fused = r.u64();
    if (fused > body) throw FormatError("fused prototype count out of range");
    for (std::uint64_t i = 0; i < fused; ++i) {
      for (auto* list : {&ck.bank.novel, &ck.bank.fused_raw, &ck.bank.fused}) {
        list->push_back(get_tensor(r));
        expect_shape(list->back(), {in_dim}, "prototype row");
      }
    }
    if (r.offset() != body)
      throw FormatError(std::to_string(body - r.offset()) + " unexpected bytes at offset " +
                        std::to_string(r.offset()));
    return ck;
  } catch (const CheckpointMismatchError&) {
    throw;
  } catch (const Error& e) {
    throw CheckpointMismatchError(std::string("corrupt checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt) {
  detail::write_file(path.string(), encode_checkpoint(ckpt));
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = detail::read_file(path.string());
  } catch (const FormatError& e) {
    throw CheckpointMismatchError(e.what());
  }
  return decode_checkpoint(bytes);
}

}  // namespace safa
