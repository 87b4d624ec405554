#include "hivla/model/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <vector>

#include "json.hpp"

#include "hivla/core/array_io.hpp"
#include "hivla/core/errors.hpp"

namespace hivla::model {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'H', 'V', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw RuntimeError("checkpoint: truncated file");
  return v;
}

json dit_to_json(const DiTConfig& c) {
  json j;
  j["d_model"] = c.d_model;
  j["layers"] = c.layers;
  j["heads"] = c.heads;
  j["kv_heads"] = c.kv_heads;
  j["horizon"] = c.horizon;
  j["d_a"] = c.d_a;
  j["d_s"] = c.d_s;
  j["ffn_hidden"] = c.ffn_hidden;
  std::vector<std::string> order;
  for (const Stream s : c.ordering) order.push_back(stream_name(s));
  j["ordering"] = order;
  j["norm_kind"] = c.norm_kind == NormKind::rmsnorm ? "rmsnorm" : "layernorm";
  j["ode_steps"] = c.ode_steps;
  return j;
}

DiTConfig dit_from_json(const json& j) {
  // Missing keys keep their defaults so hand-written configs stay short;
  // headers written by dit_to_json always carry the full set.
  DiTConfig c;
  c.d_model = j.value("d_model", c.d_model);
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.kv_heads = j.value("kv_heads", c.kv_heads);
  c.horizon = j.value("horizon", c.horizon);
  c.d_a = j.value("d_a", c.d_a);
  c.d_s = j.value("d_s", c.d_s);
  c.ffn_hidden = j.value("ffn_hidden", c.ffn_hidden);
  if (j.contains("ordering")) {
    c.ordering.clear();
    for (const auto& name : j.at("ordering")) c.ordering.push_back(stream_from_name(name.get<std::string>()));
  }
  const std::string norm = j.value("norm_kind", std::string("layernorm"));
  if (norm == "layernorm") {
    c.norm_kind = NormKind::layernorm;
  } else if (norm == "rmsnorm") {
    c.norm_kind = NormKind::rmsnorm;
  } else {
    throw ConfigError("checkpoint: unknown norm_kind " + norm);
  }
  c.ode_steps = j.value("ode_steps", c.ode_steps);
  c.validate();
  return c;
}

json enc_to_json(const EncoderConfig& c) {
  json j;
  j["d_model"] = c.d_model;
  j["patch"] = c.patch;
  j["pe_temperature"] = c.pe_temperature;
  j["vocab"] = c.vocab;
  j["crop_side"] = c.crop_side;
  j["use_abs_pe"] = c.use_abs_pe;
  return j;
}

EncoderConfig enc_from_json(const json& j) {
  EncoderConfig c;
  c.d_model = j.value("d_model", c.d_model);
  c.patch = j.value("patch", c.patch);
  c.pe_temperature = j.value("pe_temperature", c.pe_temperature);
  c.vocab = j.contains("vocab") ? j.at("vocab").get<std::vector<std::string>>() : default_vocab();
  c.crop_side = j.value("crop_side", c.crop_side);
  c.use_abs_pe = j.value("use_abs_pe", c.use_abs_pe);
  c.validate();
  return c;
}

template <typename S>
const char* dtype_tag();
template <>
const char* dtype_tag<float>() {
  return "f32";
}
template <>
const char* dtype_tag<double>() {
  return "f64";
}

template <typename S>
Array tensor_to_array(const Mat<S>& t) {
  std::vector<S> v(static_cast<std::size_t>(t.size()));
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < t.rows(); ++i)
    for (Eigen::Index j = 0; j < t.cols(); ++j) v[k++] = t(i, j);
  const std::vector<std::size_t> dims{static_cast<std::size_t>(t.rows()),
                                      static_cast<std::size_t>(t.cols())};
  if constexpr (std::is_same_v<S, float>) {
    return Array::from_f32(v, dims);
  } else {
    return Array::from_f64(v, dims);
  }
}

template <typename S>
void array_to_tensor(const Array& a, Mat<S>& t, const std::string& name) {
  if (a.dims.size() != 2) throw RuntimeError("checkpoint: tensor " + name + " is not 2d");
  if (static_cast<Eigen::Index>(a.dims[0]) != t.rows() ||
      static_cast<Eigen::Index>(a.dims[1]) != t.cols()) {
    throw RuntimeError("checkpoint: tensor " + name + " has mismatched shape");
  }
  std::vector<S> v;
  if constexpr (std::is_same_v<S, float>) {
    v = a.as_f32();
  } else {
    v = a.as_f64();
  }
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < t.rows(); ++i)
    for (Eigen::Index j = 0; j < t.cols(); ++j) t(i, j) = v[k++];
}

template <typename S>
void write_named_tensors(std::ostream& out, const Params<S>& p, const std::string& prefix) {
  p.for_each_tensor([&](const std::string& name, const Mat<S>& t) {
    const std::string full = prefix + name;
    if (full.size() > 0xffff) throw RuntimeError("checkpoint: tensor name too long");
    write_pod<std::uint16_t>(out, static_cast<std::uint16_t>(full.size()));
    out.write(full.data(), static_cast<std::streamsize>(full.size()));
    write_array(out, tensor_to_array(t));
  });
}

template <typename S>
void read_into_params(std::map<std::string, Array>& pool, Params<S>& p, const std::string& prefix) {
  p.for_each_tensor([&](const std::string& name, Mat<S>& t) {
    const std::string full = prefix + name;
    auto it = pool.find(full);
    if (it == pool.end()) throw RuntimeError("checkpoint: missing tensor " + full);
    array_to_tensor(it->second, t, full);
    pool.erase(it);
  });
}

}  // namespace

const char* stream_name(Stream s) {
  switch (s) {
    case Stream::global:
      return "global";
    case Stream::local:
      return "local";
    case Stream::lang:
      return "lang";
  }
  throw ConfigError("stream_name: invalid stream");
}

Stream stream_from_name(const std::string& name) {
  if (name == "global") return Stream::global;
  if (name == "local") return Stream::local;
  if (name == "lang") return Stream::lang;
  throw ConfigError("unknown stream name: " + name);
}

std::vector<std::string> default_vocab() {
  return {"and",  "bell",  "block", "blocks", "blue",  "center", "click", "complete", "green",
          "it",   "left",  "mat",   "middle", "move",  "of",     "on",    "pick",     "place",
          "red",  "right", "stack", "table",  "task",  "the",    "to",    "up",       "yellow"};
}

std::string dit_config_to_json(const DiTConfig& cfg) { return dit_to_json(cfg).dump(); }
DiTConfig dit_config_from_json(const std::string& text) {
  return dit_from_json(json::parse(text));
}
std::string encoder_config_to_json(const EncoderConfig& cfg) { return enc_to_json(cfg).dump(); }
EncoderConfig encoder_config_from_json(const std::string& text) {
  return enc_from_json(json::parse(text));
}

template <typename S>
void save_checkpoint(const std::string& path, const CheckpointData<S>& ck) {
  json header;
  header["dtype"] = dtype_tag<S>();
  header["step"] = ck.step;
  header["dit"] = dit_to_json(ck.dit);
  header["encoder"] = enc_to_json(ck.enc);
  header["has_opt"] = ck.has_opt;
  const std::string htext = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeError("checkpoint: cannot open " + tmp + " for writing");
    out.write(kMagic, 4);
    write_pod<std::uint32_t>(out, kVersion);
    write_pod<std::uint64_t>(out, htext.size());
    out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    std::uint32_t count = static_cast<std::uint32_t>(ck.params.count_tensors());
    if (ck.has_opt) count += 2 * static_cast<std::uint32_t>(ck.params.count_tensors());
    write_pod<std::uint32_t>(out, count);
    write_named_tensors(out, ck.params, "");
    if (ck.has_opt) {
      write_named_tensors(out, ck.opt_m, "opt.m.");
      write_named_tensors(out, ck.opt_v, "opt.v.");
    }
    if (!out) throw RuntimeError("checkpoint: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

namespace {

struct RawCheckpoint {
  CheckpointInfo info;
  std::map<std::string, Array> tensors;
};

RawCheckpoint read_raw(const std::string& path, bool header_only) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeError("checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw RuntimeError("checkpoint: bad magic in " + path);
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion) throw RuntimeError("checkpoint: unsupported version");
  const auto hlen = read_pod<std::uint64_t>(in);
  std::string htext(hlen, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw RuntimeError("checkpoint: truncated header");
  const json header = json::parse(htext, nullptr, false);
  if (header.is_discarded()) throw RuntimeError("checkpoint: invalid header JSON");

  RawCheckpoint raw;
  raw.info.dtype = header.at("dtype").get<std::string>();
  raw.info.step = header.at("step").get<std::int64_t>();
  raw.info.dit = dit_from_json(header.at("dit"));
  raw.info.enc = enc_from_json(header.at("encoder"));
  raw.info.has_opt = header.at("has_opt").get<bool>();
  if (header_only) return raw;

  const auto count = read_pod<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto nlen = read_pod<std::uint16_t>(in);
    std::string name(nlen, '\0');
    in.read(name.data(), nlen);
    if (!in) throw RuntimeError("checkpoint: truncated tensor name");
    raw.tensors.emplace(std::move(name), read_array(in));
  }
  return raw;
}

}  // namespace

template <typename S>
CheckpointData<S> load_checkpoint(const std::string& path) {
  RawCheckpoint raw = read_raw(path, false);
  if (raw.info.dtype != dtype_tag<S>()) {
    throw RuntimeError("checkpoint: stored dtype " + raw.info.dtype + " does not match requested " +
                       dtype_tag<S>());
  }
  CheckpointData<S> ck;
  ck.dit = raw.info.dit;
  ck.enc = raw.info.enc;
  ck.step = raw.info.step;
  ck.has_opt = raw.info.has_opt;
  ck.params = Params<S>::zeros(ck.dit, ck.enc);
  read_into_params(raw.tensors, ck.params, "");
  if (ck.has_opt) {
    ck.opt_m = Params<S>::zeros(ck.dit, ck.enc);
    ck.opt_v = Params<S>::zeros(ck.dit, ck.enc);
    read_into_params(raw.tensors, ck.opt_m, "opt.m.");
    read_into_params(raw.tensors, ck.opt_v, "opt.v.");
  }
  if (!raw.tensors.empty())
    throw RuntimeError("checkpoint: unexpected tensor " + raw.tensors.begin()->first);
  return ck;
}

CheckpointInfo peek_checkpoint(const std::string& path) { return read_raw(path, true).info; }

template void save_checkpoint<float>(const std::string&, const CheckpointData<float>&);
template void save_checkpoint<double>(const std::string&, const CheckpointData<double>&);
template CheckpointData<float> load_checkpoint<float>(const std::string&);
template CheckpointData<double> load_checkpoint<double>(const std::string&);

}  // namespace hivla::model
