// SPDX-License-Identifier: Apache-2.0
#include "senscal/sensbert/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "senscal/error.hpp"

namespace senscal::sensbert {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

class Writer {
public:
  template <class T> void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void bytes(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

private:
  std::string out_;
};

class Reader {
public:
  explicit Reader(std::string_view in) : in_(in) {}
  template <class T> T get(const char *what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view bytes(std::size_t n, const char *what) {
    need(n, what);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return in_.size() - pos_; }

private:
  void need(std::size_t n, const char *what) {
    if (in_.size() - pos_ < n)
      throw FormatError(std::string("checkpoint truncated while reading ") +
                        what);
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

std::size_t meta_size(const Checkpoint &ckpt, const std::string &key) {
  auto v = ckpt.meta(key);
  if (!v)
    throw FormatError("checkpoint metadata lacks '" + key + "'");
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size())
    throw FormatError("checkpoint metadata '" + key + "' is not an integer");
  return out;
}

double meta_double(const Checkpoint &ckpt, const std::string &key,
                   double fallback) {
  auto v = ckpt.meta(key);
  if (!v)
    return fallback;
  auto values = split_doubles(*v);
  if (values.size() != 1)
    throw FormatError("checkpoint metadata '" + key + "' is not a number");
  return values[0];
}

std::vector<std::string> split_names(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const auto end = comma == std::string_view::npos ? text.size() : comma;
    out.emplace_back(text.substr(start, end - start));
    if (comma == std::string_view::npos)
      break;
    start = comma + 1;
  }
  return out;
}

} // namespace

const NamedTensor *Checkpoint::find(std::string_view name) const {
  for (const auto &t : tensors)
    if (t.name == name)
      return &t;
  return nullptr;
}

std::optional<std::string> Checkpoint::meta(std::string_view key) const {
  for (const auto &[k, v] : metadata)
    if (k == key)
      return v;
  return std::nullopt;
}

void Checkpoint::set_meta(std::string key, std::string value) {
  for (auto &[k, v] : metadata)
    if (k == key) {
      v = std::move(value);
      return;
    }
  metadata.emplace_back(std::move(key), std::move(value));
}

void Checkpoint::add(std::string name, const Tensor &t) {
  NamedTensor nt;
  nt.name = std::move(name);
  for (auto d : t.shape())
    nt.dims.push_back(static_cast<std::uint32_t>(d));
  nt.values.assign(t.data().begin(), t.data().end());
  tensors.push_back(std::move(nt));
}

std::string serialize_checkpoint(const Checkpoint &ckpt) {
  Writer w;
  w.bytes(kCheckpointMagic);
  w.put<std::uint16_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto &t : ckpt.tensors) {
    if (t.name.size() > 0xFFFF)
      throw FormatError("tensor name too long: " + t.name);
    if (t.dims.size() > 0xFF)
      throw FormatError("too many dimensions for " + t.name);
    std::size_t n = 1;
    for (auto d : t.dims)
      n *= d;
    if (n != t.values.size())
      throw FormatError("tensor " + t.name + " payload does not match dims");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims)
      w.put<std::uint32_t>(d);
    for (double v : t.values)
      w.put<double>(v);
  }
  std::string meta;
  for (const auto &[k, v] : ckpt.metadata) {
    if (k.find_first_of("=\n") != std::string::npos ||
        v.find('\n') != std::string::npos)
      throw FormatError("metadata entry '" + k + "' contains a reserved "
                        "character");
    meta += k + "=" + v + "\n";
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(meta.size()));
  w.bytes(meta);
  return w.take();
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (bytes.size() < kCheckpointMagic.size() ||
      r.bytes(kCheckpointMagic.size(), "magic") != kCheckpointMagic)
    throw FormatError("not a checkpoint: bad magic bytes");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " +
                      std::to_string(version));
  const auto count = r.get<std::uint32_t>("tensor count");
  Checkpoint ckpt;
  ckpt.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = r.get<std::uint16_t>("tensor name length");
    t.name = std::string(r.bytes(name_len, "tensor name"));
    const auto ndim = r.get<std::uint8_t>("tensor rank");
    std::size_t n = 1;
    for (std::uint8_t d = 0; d < ndim; ++d) {
      const auto extent = r.get<std::uint32_t>("tensor dims");
      if (extent == 0)
        throw FormatError("tensor " + t.name + " has a zero extent");
      t.dims.push_back(extent);
      n *= extent;
    }
    if (n > r.remaining() / sizeof(double))
      throw FormatError("checkpoint truncated in payload of " + t.name);
    t.values.resize(n);
    for (auto &v : t.values)
      v = r.get<double>("tensor payload");
    ckpt.tensors.push_back(std::move(t));
  }
  const auto meta_len = r.get<std::uint32_t>("metadata length");
  std::string_view meta = r.bytes(meta_len, "metadata");
  if (r.remaining() != 0)
    throw FormatError("checkpoint has " + std::to_string(r.remaining()) +
                      " trailing bytes");
  std::size_t start = 0;
  while (start < meta.size()) {
    const auto nl = meta.find('\n', start);
    if (nl == std::string_view::npos)
      throw FormatError("metadata line is not newline-terminated");
    const auto line = meta.substr(start, nl - start);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw FormatError("metadata line lacks '='");
    ckpt.metadata.emplace_back(std::string(line.substr(0, eq)),
                               std::string(line.substr(eq + 1)));
    start = nl + 1;
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint &ckpt, const std::string &path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw DataError("cannot write checkpoint " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw DataError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DataError("cannot open checkpoint " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

std::string format_exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join_doubles(const std::vector<double> &values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i)
    out += (i ? "," : "") + format_exact(values[i]);
  return out;
}

std::vector<double> split_doubles(std::string_view text) {
  std::vector<double> out;
  if (text.empty())
    return out;
  for (const auto &part : split_names(text)) {
    double v = 0.0;
    auto [ptr, ec] =
        std::from_chars(part.data(), part.data() + part.size(), v);
    if (ec != std::errc() || ptr != part.data() + part.size())
      throw FormatError("cannot parse number '" + part + "'");
    out.push_back(v);
  }
  return out;
}

void add_encoder(Checkpoint &ckpt, const EncoderParams &enc) {
  const auto &c = enc.config;
  ckpt.set_meta("schema_version", std::to_string(kCheckpointVersion));
  ckpt.set_meta("encoder.M", std::to_string(c.M));
  ckpt.set_meta("encoder.K", std::to_string(c.K));
  ckpt.set_meta("encoder.h_dim", std::to_string(c.h_dim));
  ckpt.set_meta("encoder.heads", std::to_string(c.heads));
  ckpt.set_meta("encoder.blocks", std::to_string(c.blocks));
  ckpt.set_meta("encoder.ff_dim", std::to_string(c.ff_dim));
  ckpt.set_meta("encoder.ln_eps", format_exact(c.ln_eps));
  std::string names;
  for (std::size_t i = 0; i < enc.variable_names.size(); ++i)
    names += (i ? "," : "") + enc.variable_names[i];
  ckpt.set_meta("variable_names", names);
  for (const auto &[name, t] : enc.named())
    ckpt.add("enc/" + name, t);
}

void add_decoder(Checkpoint &ckpt, const DecoderParams &dec) {
  for (const auto &[name, t] : dec.named())
    ckpt.add("dec/" + name, t);
}

void add_standardizer(Checkpoint &ckpt,
                      const dataio::StandardizerStats &stats) {
  ckpt.set_meta("stats.x_mean", join_doubles(stats.x_mean));
  ckpt.set_meta("stats.x_std", join_doubles(stats.x_std));
  if (stats.y_mean) {
    ckpt.set_meta("stats.y_mean", format_exact(*stats.y_mean));
    ckpt.set_meta("stats.y_std", format_exact(*stats.y_std));
  }
}

Tensor tensor_from_checkpoint(const Checkpoint &ckpt, const std::string &name,
                              const numcore::Shape &expected,
                              bool requires_grad) {
  const NamedTensor *t = ckpt.find(name);
  if (!t)
    throw FormatError("checkpoint lacks tensor '" + name + "'");
  numcore::Shape shape(t->dims.begin(), t->dims.end());
  if (shape != expected)
    throw FormatError("tensor '" + name + "' has shape " +
                      numcore::shape_str(shape) + ", metadata implies " +
                      numcore::shape_str(expected));
  return Tensor::from(shape, t->values, requires_grad);
}

EncoderParams encoder_from_checkpoint(const Checkpoint &ckpt) {
  EncoderConfig c;
  c.M = meta_size(ckpt, "encoder.M");
  c.K = meta_size(ckpt, "encoder.K");
  c.h_dim = meta_size(ckpt, "encoder.h_dim");
  c.heads = meta_size(ckpt, "encoder.heads");
  c.blocks = meta_size(ckpt, "encoder.blocks");
  c.ff_dim = meta_size(ckpt, "encoder.ff_dim");
  c.ln_eps = meta_double(ckpt, "encoder.ln_eps", 1e-6);
  try {
    c.validate();
  } catch (const ParameterError &e) {
    throw FormatError(std::string("checkpoint encoder config: ") + e.what());
  }
  const std::size_t H = c.h_dim, dh = c.head_dim(), F = c.ff_dim;

  EncoderParams p;
  p.config = c;
  p.variable_names = split_names(ckpt.meta("variable_names").value_or(""));
  if (p.variable_names.size() != c.K)
    throw FormatError("checkpoint lists " +
                      std::to_string(p.variable_names.size()) +
                      " variable names for K=" + std::to_string(c.K));
  auto get = [&](const std::string &name, numcore::Shape shape,
                 bool grad = true) {
    return tensor_from_checkpoint(ckpt, "enc/" + name, shape, grad);
  };
  auto get_ln = [&](const std::string &name, std::size_t n) {
    return LayerNormParams{get(name + ".gamma", {n}), get(name + ".beta", {n})};
  };
  p.in_w = get("input_proj.weight", {c.K, H});
  p.in_b = get("input_proj.bias", {H});
  p.ln_in = get_ln("input_norm", H);
  p.ln_pe = get_ln("position_norm", H);
  p.pe_table = get("position_table", {c.M, H}, false);
  for (std::size_t b = 0; b < c.blocks; ++b) {
    const std::string pre = "block" + std::to_string(b) + ".";
    EncoderBlock blk;
    for (std::size_t h = 0; h < c.heads; ++h) {
      const std::string hp = pre + "head" + std::to_string(h) + ".";
      blk.heads.push_back({get(hp + "query", {H, dh}),
                           get(hp + "key", {H, dh}),
                           get(hp + "value", {H, dh})});
    }
    blk.w_o = get(pre + "attn_out", {H, H});
    blk.ln_attn = get_ln(pre + "attn_norm", H);
    blk.proj_w = get(pre + "proj.weight", {H, H});
    blk.proj_b = get(pre + "proj.bias", {H});
    blk.ln_proj = get_ln(pre + "proj_norm", H);
    blk.ff1_w = get(pre + "ff1.weight", {H, F});
    blk.ff1_b = get(pre + "ff1.bias", {F});
    blk.ff2_w = get(pre + "ff2.weight", {F, H});
    blk.ff2_b = get(pre + "ff2.bias", {H});
    blk.ln_ff = get_ln(pre + "ff_norm", H);
    p.blocks.push_back(std::move(blk));
  }
  return p;
}

DecoderParams decoder_from_checkpoint(const Checkpoint &ckpt) {
  const std::size_t H = meta_size(ckpt, "encoder.h_dim");
  const std::size_t K = meta_size(ckpt, "encoder.K");
  auto get = [&](const std::string &name, numcore::Shape shape) {
    return tensor_from_checkpoint(ckpt, "dec/" + name, shape);
  };
  DecoderParams d;
  d.proj_w = get("proj.weight", {H, H});
  d.proj_b = get("proj.bias", {H});
  d.pred_w = get("pred.weight", {H, K});
  d.pred_b = get("pred.bias", {K});
  d.ln_out = {get("out_norm.gamma", {K}), get("out_norm.beta", {K})};
  d.ln_eps = meta_double(ckpt, "encoder.ln_eps", 1e-6);
  return d;
}

std::optional<dataio::StandardizerStats>
standardizer_from_checkpoint(const Checkpoint &ckpt) {
  auto mean = ckpt.meta("stats.x_mean");
  auto sd = ckpt.meta("stats.x_std");
  if (!mean || !sd)
    return std::nullopt;
  dataio::StandardizerStats stats;
  stats.x_mean = split_doubles(*mean);
  stats.x_std = split_doubles(*sd);
  if (stats.x_mean.size() != stats.x_std.size())
    throw FormatError("standardizer statistics have inconsistent lengths");
  if (auto ym = ckpt.meta("stats.y_mean"))
    stats.y_mean = split_doubles(*ym).at(0);
  if (auto ys = ckpt.meta("stats.y_std"))
    stats.y_std = split_doubles(*ys).at(0);
  return stats;
}

} // namespace senscal::sensbert
