#include "tssd/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

namespace tssd {

namespace {

constexpr char kMagic[4] = {'T', 'S', 'S', 'D'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  template <typename T>
  void pod(T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void text(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  void array(const std::string& name, const Shape& shape, const float* data, Index count) {
    text(name);
    pod(static_cast<std::uint32_t>(shape.size()));
    for (Index d : shape) pod(static_cast<std::uint64_t>(d));
    out_.append(reinterpret_cast<const char*>(data), static_cast<std::size_t>(count) * sizeof(float));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T pod() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string text() {
    const auto len = pod<std::uint32_t>();
    need(len);
    std::string s = bytes_.substr(pos_, len);
    pos_ += len;
    return s;
  }
  void floats(float* dst, Index count) {
    const std::size_t bytes = static_cast<std::size_t>(count) * sizeof(float);
    need(bytes);
    std::memcpy(dst, bytes_.data() + pos_, bytes);
    pos_ += bytes;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint: truncated file");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

struct Slot {
  Shape shape;
  float* data;
  Index count;
};

std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

std::string optimizer_text(const AdamState<float>& s) {
  return "step = " + std::to_string(s.step) + "\nbase_lr = " + format_double(s.base_lr) +
         "\nbeta1 = " + format_double(s.beta1) + "\nbeta2 = " + format_double(s.beta2) +
         "\nepsilon = " + format_double(s.epsilon) + "\ntensors = " + std::to_string(s.m.size()) + "\n";
}

AdamState<float> parse_optimizer_text(const std::string& text) {
  AdamState<float> s;
  std::istringstream in(text);
  std::string key, eq, value;
  std::size_t tensors = 0;
  while (in >> key >> eq >> value) {
    if (eq != "=") throw CheckpointError("checkpoint: malformed optimizer header");
    try {
      if (key == "step") s.step = std::stoll(value);
      else if (key == "base_lr") s.base_lr = std::stod(value);
      else if (key == "beta1") s.beta1 = std::stod(value);
      else if (key == "beta2") s.beta2 = std::stod(value);
      else if (key == "epsilon") s.epsilon = std::stod(value);
      else if (key == "tensors") tensors = std::stoull(value);
      else throw CheckpointError("checkpoint: unknown optimizer key '" + key + "'");
    } catch (const std::logic_error&) {
      throw CheckpointError("checkpoint: bad optimizer value for '" + key + "'");
    }
  }
  s.m.resize(tensors);
  s.v.resize(tensors);
  return s;
}

std::vector<std::string> parameter_names(const Model<float>& model) {
  std::vector<std::string> names;
  for (const auto& l : model.layers()) {
    names.push_back(l.name + ".weight");
    names.push_back(l.name + ".bias");
  }
  return names;
}

}  // namespace

std::string serialize_checkpoint(const Model<float>& model, const AdamState<float>* optimizer) {
  Writer w;
  for (char c : kMagic) w.pod(c);
  w.pod(kCheckpointVersion);
  w.text(model.config().to_text());
  w.text(optimizer ? optimizer_text(*optimizer) : std::string());

  std::uint32_t count = 0;
  for (const auto& l : model.layers()) count += l.kind == nn::LayerKind::batchnorm1d ? 4 : 2;
  const auto names = parameter_names(model);
  if (optimizer) count += static_cast<std::uint32_t>(optimizer->m.size() + optimizer->v.size());
  w.pod(count);

  for (const auto& l : model.layers()) {
    w.array(l.name + ".weight", l.weight.shape(), l.weight.data(), l.weight.size());
    w.array(l.name + ".bias", l.bias.shape(), l.bias.data(), l.bias.size());
    if (l.kind == nn::LayerKind::batchnorm1d) {
      w.array(l.name + ".running_mean", l.running_mean.shape(), l.running_mean.data(), l.running_mean.size());
      w.array(l.name + ".running_var", l.running_var.shape(), l.running_var.data(), l.running_var.size());
    }
  }
  if (optimizer) {
    if (!optimizer->m.empty() && optimizer->m.size() != names.size()) {
      throw std::invalid_argument("serialize_checkpoint: optimizer state does not match the model");
    }
    for (std::size_t i = 0; i < optimizer->m.size(); ++i) {
      w.array("adam.m:" + names[i], {optimizer->m[i].size()}, optimizer->m[i].data(), optimizer->m[i].size());
    }
    for (std::size_t i = 0; i < optimizer->v.size(); ++i) {
      w.array("adam.v:" + names[i], {optimizer->v[i].size()}, optimizer->v[i].data(), optimizer->v[i].size());
    }
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  char magic[4];
  for (char& c : magic) c = r.pod<char>();
  if (std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError("checkpoint: bad magic bytes (not a .tssd file)");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }

  ModelConfig config;
  try {
    config = ModelConfig::parse(r.text());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: bad config header: ") + e.what());
  }
  Checkpoint ck{Model<float>(config), std::nullopt};
  const std::string opt_text = r.text();
  if (!opt_text.empty()) ck.optimizer = parse_optimizer_text(opt_text);

  std::map<std::string, Slot> slots;
  for (auto& l : ck.model.layers()) {
    slots[l.name + ".weight"] = {l.weight.shape(), l.weight.data(), l.weight.size()};
    slots[l.name + ".bias"] = {l.bias.shape(), l.bias.data(), l.bias.size()};
    if (l.kind == nn::LayerKind::batchnorm1d) {
      slots[l.name + ".running_mean"] = {l.running_mean.shape(), l.running_mean.data(), l.running_mean.size()};
      slots[l.name + ".running_var"] = {l.running_var.shape(), l.running_var.data(), l.running_var.size()};
    }
  }
  if (ck.optimizer) {
    const auto names = parameter_names(ck.model);
    auto& opt = *ck.optimizer;
    if (!opt.m.empty() && opt.m.size() != names.size()) {
      throw CheckpointError("checkpoint: optimizer tracks " + std::to_string(opt.m.size()) + " tensors, model has " +
                            std::to_string(names.size()));
    }
    auto params = ck.model.parameters();
    for (std::size_t i = 0; i < opt.m.size(); ++i) {
      const Index n = params[i]->size();
      opt.m[i] = AdamState<float>::Array::Zero(n);
      opt.v[i] = AdamState<float>::Array::Zero(n);
      slots["adam.m:" + names[i]] = {{n}, opt.m[i].data(), n};
      slots["adam.v:" + names[i]] = {{n}, opt.v[i].data(), n};
    }
  }

  const auto count = r.pod<std::uint32_t>();
  if (count != slots.size()) {
    throw CheckpointError("checkpoint: holds " + std::to_string(count) + " arrays, config implies " +
                          std::to_string(slots.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.text();
    auto it = slots.find(name);
    if (it == slots.end()) throw CheckpointError("checkpoint: unexpected array '" + name + "'");
    const auto rank = r.pod<std::uint32_t>();
    if (rank > 8) throw CheckpointError("checkpoint: implausible rank for '" + name + "'");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<Index>(r.pod<std::uint64_t>());
    if (shape != it->second.shape) {
      throw CheckpointError("checkpoint: '" + name + "' has shape " + shape_string(shape) + ", expected " +
                            shape_string(it->second.shape));
    }
    r.floats(it->second.data, it->second.count);
    slots.erase(it);
  }
  if (!r.at_end()) throw CheckpointError("checkpoint: trailing bytes after payload");
  return ck;
}

void save_checkpoint(const Model<float>& model, const AdamState<float>* optimizer, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(model, optimizer);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace tssd
