#include "iaunet/nn.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace iaunet::nn {

namespace {

std::int64_t fan_in_of(const Shape& shape) {
  std::int64_t f = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) f *= shape[i];
  return std::max<std::int64_t>(f, 1);
}

}  // namespace

void ParamStore::check_unique(const std::string& name) {
  if (index_.count(name))
    throw ContractError(msg("duplicate parameter name '", name, "'"));
}

Tensor ParamStore::create(const std::string& name, Shape shape, Init init,
                          Rng& rng, double init_arg) {
  check_unique(name);
  const auto n = numel(shape);
  std::vector<double> data(static_cast<std::size_t>(n), 0.0);
  switch (init) {
    case Init::zeros:
      break;
    case Init::ones:
      std::fill(data.begin(), data.end(), 1.0);
      break;
    case Init::kaiming_uniform: {
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in_of(shape)));
      for (auto& v : data) v = rng.uniform(-bound, bound);
      break;
    }
    case Init::normal:
      for (auto& v : data) v = rng.normal(0.0, init_arg);
      break;
  }
  Tensor t = Tensor::from_data(std::move(shape), std::move(data), true);
  Entry e;
  e.name = name;
  e.tensor = t;
  e.shape = t.shape();
  e.trainable = true;
  index_[name] = entries_.size();
  entries_.push_back(std::move(e));
  return t;
}

Tensor ParamStore::create_buffer(const std::string& name, Shape shape,
                                 double fill) {
  check_unique(name);
  Tensor t = Tensor::full(std::move(shape), fill, false);
  Entry e;
  e.name = name;
  e.tensor = t;
  e.shape = t.shape();
  e.trainable = false;
  index_[name] = entries_.size();
  entries_.push_back(std::move(e));
  return t;
}

const ParamStore::Entry* ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &entries_[it->second];
}

void ParamStore::zero_grads() {
  for (auto& e : entries_)
    if (e.tensor.defined()) e.tensor.zero_grad();
}

std::int64_t ParamStore::trainable_count() const {
  std::int64_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.size();
  return n;
}

namespace {

constexpr char kMagic[8] = {'I', 'A', 'U', 'N', 'E', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw ValidationError("checkpoint truncated while reading u32");
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i)
    b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw ValidationError("checkpoint truncated while reading f64");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_checkpoint(const ParamStore& store, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(msg("cannot open '", path, "' for writing"));
  os.write(kMagic, 8);
  write_u32(os, kVersion);
  write_u32(os, static_cast<std::uint32_t>(store.entries().size()));
  for (const auto& e : store.entries()) {
    write_u32(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_u32(os, static_cast<std::uint32_t>(e.shape.size()));
    for (int d : e.shape) write_u32(os, static_cast<std::uint32_t>(d));
    const double* p = e.values();
    for (std::int64_t i = 0; i < e.size(); ++i) write_f64(os, p[i]);
  }
  if (!os) throw IoError(msg("write to '", path, "' failed"));
}

void load_checkpoint(ParamStore& store, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(msg("cannot open checkpoint '", path, "'"));
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw ValidationError(msg("'", path, "' is not a parameter checkpoint"));
  const std::uint32_t version = read_u32(is);
  if (version != kVersion)
    throw ValidationError(msg("unsupported checkpoint version ", version));
  const std::uint32_t count = read_u32(is);

  struct Stored {
    Shape shape;
    std::vector<double> data;
  };
  std::unordered_map<std::string, Stored> stored;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw ValidationError("checkpoint truncated while reading a name");
    const std::uint32_t rank = read_u32(is);
    Shape shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d)
      shape[d] = static_cast<int>(read_u32(is));
    const auto n = numel(shape);
    std::vector<double> data(static_cast<std::size_t>(n));
    for (std::int64_t k = 0; k < n; ++k) data[k] = read_f64(is);
    stored[name] = {std::move(shape), std::move(data)};
  }

  std::vector<std::string> problems;
  for (auto& e : store.entries()) {
    auto it = stored.find(e.name);
    if (it == stored.end()) {
      problems.push_back(msg("missing field '", e.name, "'"));
      continue;
    }
    if (it->second.shape != e.shape) {
      problems.push_back(msg("field '", e.name, "': checkpoint shape ",
                             shape_str(it->second.shape), " vs model shape ",
                             shape_str(e.shape)));
      continue;
    }
  }
  for (const auto& [name, s] : stored)
    if (!store.find(name))
      problems.push_back(msg("unknown field '", name, "' in checkpoint"));
  if (!problems.empty()) {
    std::string all = "checkpoint incompatible with model:";
    for (const auto& p : problems) all += "\n  " + p;
    throw ValidationError(all);
  }
  for (auto& e : store.entries()) {
    const auto& src = stored[e.name].data;
    std::copy(src.begin(), src.end(), e.values());
  }
}

Conv2d::Conv2d(ParamStore& ps, const std::string& name, int cin, int cout,
               int k, int stride_, int padding_, Rng& rng, bool with_bias)
    : stride(stride_), padding(padding_) {
  weight = ps.create(name + ".weight", {cout, cin, k, k},
                     Init::kaiming_uniform, rng);
  if (with_bias) bias = ps.create(name + ".bias", {cout}, Init::zeros, rng);
}

DepthwiseConv2d::DepthwiseConv2d(ParamStore& ps, const std::string& name,
                                 int channels, int k, int stride_,
                                 int padding_, Rng& rng)
    : stride(stride_), padding(padding_) {
  weight = ps.create(name + ".weight", {channels, 1, k, k},
                     Init::kaiming_uniform, rng);
}

BatchNorm2d::BatchNorm2d(ParamStore& ps, const std::string& name, int channels,
                         Rng& rng) {
  gamma = ps.create(name + ".gamma", {channels}, Init::ones, rng);
  beta = ps.create(name + ".beta", {channels}, Init::zeros, rng);
  state.running_mean = ps.create_buffer(name + ".running_mean", {channels}, 0.0);
  state.running_var = ps.create_buffer(name + ".running_var", {channels}, 1.0);
}

Linear::Linear(ParamStore& ps, const std::string& name, int din, int dout,
               Rng& rng, bool with_bias) {
  weight = ps.create(name + ".weight", {dout, din}, Init::kaiming_uniform, rng);
  if (with_bias) bias = ps.create(name + ".bias", {dout}, Init::zeros, rng);
}

LayerNorm::LayerNorm(ParamStore& ps, const std::string& name, int dim,
                     Rng& rng) {
  gamma = ps.create(name + ".gamma", {dim}, Init::ones, rng);
  beta = ps.create(name + ".beta", {dim}, Init::zeros, rng);
}

}  // namespace iaunet::nn
