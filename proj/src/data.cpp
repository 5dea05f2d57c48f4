#include "safa/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bytes.hpp"
#include "safa/errors.hpp"
#include "safa/hash.hpp"

namespace safa {

namespace detail {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + path);
}

}  // namespace detail

std::string to_hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

namespace {

constexpr std::string_view kDatasetMagic{"SAFASNN-DS\0\0\0\0\0\0", 16};
constexpr std::uint32_t kDatasetVersion = 1;

}  // namespace

void SyntheticSpec::validate() const {
  if (classes < 1) throw ConfigError("dataset.classes", "must be >= 1");
  if (feature_dim < 1) throw ConfigError("dataset.feature_dim", "must be >= 1");
  if (!(radius > 0.0)) throw ConfigError("dataset.radius", "must be positive");
  if (!(stddev > 0.0)) throw ConfigError("dataset.stddev", "must be positive");
  if (train_per_class < 1) throw ConfigError("dataset.train_per_class", "must be >= 1");
  if (test_per_class < 1) throw ConfigError("dataset.test_per_class", "must be >= 1");
  if (base_classes < 1) throw ConfigError("dataset.base_classes", "must be >= 1");
  if (sessions > 0 && (way < 1 || shot < 1)) throw ConfigError("fscil.way", "way and shot must be >= 1");
  if (base_classes + sessions * way != classes)
    throw ConfigError("dataset.classes", "must equal base_classes + sessions * way (" +
                                             std::to_string(base_classes + sessions * way) + ")");
  if (sessions > 0 && shot > train_per_class)
    throw ConfigError("fscil.shot", "exceeds dataset.train_per_class");
}

std::size_t FscilStream::seen_classes(std::size_t session) const {
  std::size_t n = base.classes.size();
  for (std::size_t s = 0; s < session && s < incremental.size(); ++s) n += incremental[s].classes.size();
  return n;
}

Dataset gen_synthetic_dataset(const SyntheticSpec& spec, RngStream& rng) {
  spec.validate();
  const auto C = spec.classes, D = spec.feature_dim;
  Tensor means({C, D});
  for (std::size_t c = 0; c < C; ++c) {
    auto row = means.row(c);
    double n2 = 0.0;
    do {
      n2 = 0.0;
      for (auto& v : row) {
        v = rng.next_normal();
        n2 += v * v;
      }
    } while (!(n2 > 0.0));
    const double scale = spec.radius / std::sqrt(n2);
    for (auto& v : row) v *= scale;
  }
  // stddev is the RMS distance of a sample from its class mean.
  const double coord_sd = spec.stddev / std::sqrt(static_cast<double>(D));
  auto draw = [&](std::size_t per_class, Tensor& x, std::vector<std::size_t>& y) {
    x = Tensor({C * per_class, D});
    y.resize(C * per_class);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t k = 0; k < per_class; ++k) {
        const auto i = c * per_class + k;
        auto row = x.row(i);
        for (std::size_t d = 0; d < D; ++d) row[d] = means.at(c, d) + coord_sd * rng.next_normal();
        y[i] = c;
      }
  };
  Dataset ds;
  ds.name = "synthetic";
  ds.classes = C;
  draw(spec.train_per_class, ds.train_x, ds.train_y);
  draw(spec.test_per_class, ds.test_x, ds.test_y);
  return ds;
}

FscilStream gen_synthetic_stream(const SyntheticSpec& spec, std::uint64_t seed, DatasetManifest* manifest,
                                 bool index_order) {
  RngStream data_rng(seed, streams::kData);
  RngStream split_rng(seed, streams::kSplit);
  const Dataset ds = gen_synthetic_dataset(spec, data_rng);
  if (manifest) {
    const auto train = encode_flat(ds.train_x, ds.train_y);
    const auto test = encode_flat(ds.test_x, ds.test_y);
    manifest->name = ds.name;
    manifest->dim = spec.feature_dim;
    manifest->classes = spec.classes;
    manifest->counts.assign(spec.classes, spec.train_per_class);
    manifest->files.clear();
    manifest->checksums = {to_hex(fnv1a(std::span(train).first(train.size() - 8))),
                           to_hex(fnv1a(std::span(test).first(test.size() - 8)))};
    std::ostringstream src;
    src << "synthetic(classes=" << spec.classes << ",dim=" << spec.feature_dim << ",radius=" << spec.radius
        << ",stddev=" << spec.stddev << ",train=" << spec.train_per_class << ",test=" << spec.test_per_class
        << ",seed=" << seed << ")";
    manifest->source = src.str();
  }
  return build_splits(ds, spec.base_classes, spec.sessions, spec.way, spec.shot, split_rng, index_order);
}

FscilStream build_splits(const Dataset& dataset, std::size_t base_classes, std::size_t sessions, std::size_t way,
                         std::size_t shot, RngStream& rng, bool index_order) {
  const auto C = dataset.classes;
  if (base_classes < 1) throw ConfigError("dataset.base_classes", "must be >= 1");
  if (sessions > 0 && (way < 1 || shot < 1)) throw ConfigError("fscil.way", "way and shot must be >= 1");
  if (base_classes + sessions * way > C)
    throw ConfigError("dataset.base_classes", "base_classes + sessions * way exceeds the " + std::to_string(C) +
                                                  " available classes");

  std::vector<std::size_t> order(C);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (!index_order)
    for (std::size_t i = C; i > 1; --i) std::swap(order[i - 1], order[rng.next_below(i)]);
  const std::size_t used = base_classes + sessions * way;
  order.resize(used);

  std::vector<std::size_t> local(C, SIZE_MAX);
  for (std::size_t i = 0; i < used; ++i) local[order[i]] = i;

  std::vector<std::vector<std::size_t>> train_of(used), test_of(used);
  for (std::size_t i = 0; i < dataset.train_y.size(); ++i)
    if (const auto c = dataset.train_y[i]; c < C && local[c] != SIZE_MAX) train_of[local[c]].push_back(i);
  for (std::size_t i = 0; i < dataset.test_y.size(); ++i)
    if (const auto c = dataset.test_y[i]; c < C && local[c] != SIZE_MAX) test_of[local[c]].push_back(i);

  FscilStream st;
  st.data.name = dataset.name;
  st.data.classes = used;
  st.original_class = order;
  st.way = way;
  st.shot = shot;
  st.seed = rng.seed();

  // Relabelled copies keep only the classes the protocol uses.
  std::vector<std::size_t> train_keep, test_keep;
  for (std::size_t i = 0; i < dataset.train_y.size(); ++i)
    if (local[dataset.train_y[i]] != SIZE_MAX) train_keep.push_back(i);
  for (std::size_t i = 0; i < dataset.test_y.size(); ++i)
    if (local[dataset.test_y[i]] != SIZE_MAX) test_keep.push_back(i);
  const auto D = dataset.feature_dim();
  auto gather = [&](const Tensor& x, const std::vector<std::size_t>& y, const std::vector<std::size_t>& keep,
                    Tensor& ox, std::vector<std::size_t>& oy, std::vector<std::size_t>& new_index) {
    if (keep.empty()) throw ConfigError("dataset", "no samples for the selected classes");
    ox = Tensor({keep.size(), D});
    oy.resize(keep.size());
    new_index.assign(y.size(), SIZE_MAX);
    for (std::size_t k = 0; k < keep.size(); ++k) {
      std::copy(x.row(keep[k]).begin(), x.row(keep[k]).end(), ox.row(k).begin());
      oy[k] = local[y[keep[k]]];
      new_index[keep[k]] = k;
    }
  };
  std::vector<std::size_t> train_index, test_index;
  gather(dataset.train_x, dataset.train_y, train_keep, st.data.train_x, st.data.train_y, train_index);
  gather(dataset.test_x, dataset.test_y, test_keep, st.data.test_x, st.data.test_y, test_index);

  auto add_class = [&](Session& s, std::size_t c, bool support) {
    s.classes.push_back(c);
    auto pool = train_of[c];
    if (support) {
      if (pool.size() < shot)
        throw ConfigError("fscil.shot", "class " + std::to_string(order[c]) + " has only " +
                                            std::to_string(pool.size()) + " training samples");
      for (std::size_t i = 0; i < shot; ++i) {
        std::swap(pool[i], pool[i + rng.next_below(pool.size() - i)]);
        s.train.push_back(train_index[pool[i]]);
      }
    } else {
      for (auto i : pool) s.train.push_back(train_index[i]);
    }
    for (auto i : test_of[c]) s.test.push_back(test_index[i]);
  };

  for (std::size_t c = 0; c < base_classes; ++c) add_class(st.base, c, false);
  for (std::size_t s = 0; s < sessions; ++s) {
    Session sess;
    for (std::size_t k = 0; k < way; ++k) add_class(sess, base_classes + s * way + k, true);
    st.incremental.push_back(std::move(sess));
  }
  if (sessions > 0 && st.base.train.size() < 10 * way * shot)
    throw ConfigError("dataset", "base training set (" + std::to_string(st.base.train.size()) +
                                     ") must be at least 10x the per-session support size");
  return st;
}

void validate_stream(const FscilStream& stream) {
  std::set<std::size_t> seen(stream.base.classes.begin(), stream.base.classes.end());
  if (seen.size() != stream.base.classes.size()) throw ProtocolError("base session repeats a class");
  for (std::size_t s = 0; s < stream.incremental.size(); ++s) {
    const auto& sess = stream.incremental[s];
    for (auto c : sess.classes)
      if (!seen.insert(c).second)
        throw ProtocolError("session " + std::to_string(s + 1) + " reuses class " + std::to_string(c));
    if (sess.train.size() != sess.classes.size() * stream.shot)
      throw ProtocolError("session " + std::to_string(s + 1) + " support set is not N-way K-shot");
    for (auto i : sess.train) {
      const auto y = stream.data.train_y.at(i);
      if (std::find(sess.classes.begin(), sess.classes.end(), y) == sess.classes.end())
        throw ProtocolError("session " + std::to_string(s + 1) + " support sample from foreign class");
    }
  }
}

std::vector<std::uint8_t> encode_flat(const Tensor& x, const std::vector<std::size_t>& y) {
  const auto n = x.rows(), d = x.cols();
  if (y.size() != n) throw DimensionError("encode_flat: label count mismatch");
  detail::ByteWriter w;
  w.raw(kDatasetMagic);
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(n));
  w.u32(static_cast<std::uint32_t>(d));
  w.u32(4);
  for (std::size_t i = 0; i < n; ++i) {
    w.u32(static_cast<std::uint32_t>(y[i]));
    for (double v : x.row(i)) w.f32(static_cast<float>(v));
  }
  w.u64(fnv1a(w.bytes()));
  return std::move(w.bytes());
}

void decode_flat(const std::vector<std::uint8_t>& bytes, Tensor& x, std::vector<std::size_t>& y,
                 std::uint64_t* checksum) {
  if (bytes.size() < kDatasetMagic.size() + 16 + 8)
    throw FormatError("truncated data at byte offset " + std::to_string(bytes.size()) + ": file too short");
  const auto body = bytes.size() - 8;
  detail::ByteReader r(bytes, bytes.size());
  if (r.raw(kDatasetMagic.size()) != kDatasetMagic) throw FormatError("bad magic at byte offset 0");
  const auto version = r.u32();
  if (version != kDatasetVersion) throw FormatError("unsupported dataset version " + std::to_string(version));
  const auto n = r.u32();
  const auto d = r.u32();
  const auto lw = r.u32();
  if (lw != 4) throw FormatError("unsupported label width " + std::to_string(lw));
  if (n == 0 || d == 0) throw FormatError("empty dataset file");
  const std::size_t expected = kDatasetMagic.size() + 16 + std::size_t{n} * (4 + 4 * std::size_t{d}) + 8;
  if (bytes.size() < expected)
    throw FormatError("truncated data at byte offset " + std::to_string(bytes.size()) + ": expected " +
                      std::to_string(expected) + " bytes");
  if (bytes.size() > expected) throw FormatError("trailing bytes after offset " + std::to_string(expected));

  detail::ByteReader tail(bytes, bytes.size());
  tail.raw(body);
  const auto stored = tail.u64();
  const auto actual = fnv1a(std::span(bytes).first(body));
  if (stored != actual)
    throw IntegrityError("checksum mismatch: stored " + to_hex(stored) + ", computed " + to_hex(actual));

  x = Tensor({n, d});
  y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = r.u32();
    for (auto& v : x.row(i)) v = r.f32();
  }
  if (checksum) *checksum = stored;
}

std::uint64_t write_flat_file(const std::filesystem::path& path, const Tensor& x, const std::vector<std::size_t>& y) {
  const auto bytes = encode_flat(x, y);
  detail::write_file(path.string(), bytes);
  return fnv1a(std::span(bytes).first(bytes.size() - 8));
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  nlohmann::ordered_json j;
  j["name"] = m.name;
  j["dim"] = m.dim;
  j["classes"] = m.classes;
  j["counts"] = m.counts;
  j["files"] = m.files;
  j["checksum-hex"] = m.checksums;
  if (!m.source.empty()) j["source"] = m.source;
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    DatasetManifest m;
    m.name = j.at("name").get<std::string>();
    m.dim = j.at("dim").get<std::size_t>();
    m.classes = j.at("classes").get<std::size_t>();
    m.counts = j.at("counts").get<std::vector<std::size_t>>();
    m.files = j.at("files").get<std::vector<std::string>>();
    m.checksums = j.at("checksum-hex").get<std::vector<std::string>>();
    if (j.contains("source")) m.source = j["source"].get<std::string>();
    if (m.files.size() != 2 || m.checksums.size() != 2)
      throw FormatError("manifest must list exactly two files (train, test) with checksums");
    if (m.counts.size() != m.classes) throw FormatError("manifest counts length differs from classes");
    for (auto c : m.counts)
      if (c == 0) throw FormatError("manifest counts must be positive");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed manifest " + path.string() + ": " + e.what());
  }
}

DatasetManifest save_flat_dataset(const std::filesystem::path& manifest_path, const Dataset& ds) {
  const auto dir = manifest_path.parent_path();
  const auto stem = manifest_path.stem().string();
  DatasetManifest m;
  m.name = ds.name;
  m.dim = ds.feature_dim();
  m.classes = ds.classes;
  m.counts.assign(ds.classes, 0);
  for (auto y : ds.train_y) ++m.counts.at(y);
  m.files = {stem + ".train.bin", stem + ".test.bin"};
  m.checksums = {to_hex(write_flat_file(dir / m.files[0], ds.train_x, ds.train_y)),
                 to_hex(write_flat_file(dir / m.files[1], ds.test_x, ds.test_y))};
  write_manifest(manifest_path, m);
  return m;
}

Dataset load_flat_dataset(const std::filesystem::path& manifest_path) {
  const auto m = read_manifest(manifest_path);
  const auto dir = manifest_path.parent_path();
  Dataset ds;
  ds.name = m.name;
  ds.classes = m.classes;
  Tensor* xs[2] = {&ds.train_x, &ds.test_x};
  std::vector<std::size_t>* ys[2] = {&ds.train_y, &ds.test_y};
  for (int k = 0; k < 2; ++k) {
    const auto bytes = detail::read_file((dir / m.files[k]).string());
    std::uint64_t sum = 0;
    decode_flat(bytes, *xs[k], *ys[k], &sum);
    if (to_hex(sum) != m.checksums[k])
      throw IntegrityError(m.files[k] + ": checksum " + to_hex(sum) + " differs from manifest " + m.checksums[k]);
    if (xs[k]->cols() != m.dim) throw FormatError(m.files[k] + ": feature dim differs from manifest");
    for (auto y : *ys[k])
      if (y >= m.classes) throw FormatError(m.files[k] + ": label " + std::to_string(y) + " out of range");
  }

  double lo = INFINITY, hi = -INFINITY;
  for (const Tensor* x : xs)
    for (double v : x->data()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (lo < 0.0 || hi > 1.0) {
    const double span = hi > lo ? hi - lo : 1.0;
    for (Tensor* x : xs)
      for (auto& v : x->data()) v = (v - lo) / span;
  }
  return ds;
}

}  // namespace safa
