#include "sst/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sst {

namespace {

constexpr char kMagic[] = "SLSTMCKPT";
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_u64(std::ostream& out, uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

uint32_t read_u32(std::istream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

uint64_t read_u64(std::istream& in) {
  uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

void write_tensor(std::ostream& out, const std::string& name,
                  const Tensor& t) {
  write_u32(out, static_cast<uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  std::vector<Index> shape = t.shape();
  write_u32(out, static_cast<uint32_t>(shape.size()));
  for (Index e : shape) write_u64(out, static_cast<uint64_t>(e));
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
}

std::pair<std::string, Tensor> read_tensor(std::istream& in) {
  uint32_t name_len = read_u32(in);
  std::string name(name_len, '\0');
  in.read(name.data(), name_len);
  uint32_t rank = read_u32(in);
  if (rank > 2) throw std::runtime_error("checkpoint: bad tensor rank");
  Index rows = 1, cols = 1;
  if (rank >= 1) rows = static_cast<Index>(read_u64(in));
  if (rank == 2) cols = static_cast<Index>(read_u64(in));
  Tensor t(Mat::Zero(rows, cols), static_cast<int>(rank));
  in.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(double)));
  return {std::move(name), std::move(t)};
}

std::string encode_labels(const std::vector<std::string>& names) {
  std::string out;
  for (size_t i = 0; i < names.size(); ++i) {
    if (i) out += '\x1f';
    out += names[i];
  }
  return out;
}

std::vector<std::string> decode_labels(const std::string& s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  size_t at = 0;
  while (true) {
    size_t sep = s.find('\x1f', at);
    if (sep == std::string::npos) {
      out.push_back(s.substr(at));
      break;
    }
    out.push_back(s.substr(at, sep - at));
    at = sep + 1;
  }
  return out;
}

}  // namespace

Checkpoint Checkpoint::capture(Model& model, const TrainConfig& tc,
                               const AdamState& adam, int epoch,
                               uint64_t vocab_hash, double best_metric,
                               const std::vector<std::string>& label_names) {
  Checkpoint c;
  c.model_cfg = model.cfg;
  c.train_cfg = tc;
  c.adam = adam;
  c.epoch = epoch;
  c.vocab_hash = vocab_hash;
  c.best_metric = best_metric;
  c.label_names = label_names;
  c.tensors.emplace(model.embeddings.name, model.embeddings.value);
  for (Parameter* p : model.parameters()) c.tensors.emplace(p->name, p->value);
  return c;
}

Model Checkpoint::restore_model() const {
  auto it = tensors.find("emb.table");
  if (it == tensors.end()) {
    throw std::runtime_error("checkpoint: missing embedding table");
  }
  Model model = Model::create(model_cfg, it->second);
  model.embeddings.value = it->second;
  for (Parameter* p : model.parameters()) {
    auto t = tensors.find(p->name);
    if (t == tensors.end()) {
      throw std::runtime_error("checkpoint: missing tensor " + p->name);
    }
    if (!t->second.same_shape(p->value)) {
      throw std::runtime_error("checkpoint: shape mismatch for " + p->name);
    }
    p->value = t->second;
  }
  return model;
}

void Checkpoint::restore_adam(AdamState& out) const {
  out = adam;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out.write(kMagic, sizeof(kMagic) - 1);
  write_u32(out, kVersion);

  std::ostringstream cfg;
  cfg << "encoder=" << to_string(c.model_cfg.encoder) << "\n"
      << "head=" << to_string(c.model_cfg.head) << "\n"
      << "hidden=" << c.model_cfg.hidden << "\n"
      << "emb_dim=" << c.model_cfg.emb_dim << "\n"
      << "steps=" << c.model_cfg.steps << "\n"
      << "window=" << c.model_cfg.window << "\n"
      << "nodes=" << c.model_cfg.nodes << "\n"
      << "layers=" << c.model_cfg.layers << "\n"
      << "attn_size=" << c.model_cfg.attn_size << "\n"
      << "n_classes=" << c.model_cfg.n_classes << "\n"
      << "n_tags=" << c.model_cfg.n_tags << "\n"
      << "fine_tune=" << (c.model_cfg.fine_tune_embeddings ? 1 : 0) << "\n"
      << "model_seed=" << c.model_cfg.seed << "\n"
      << "lr=" << std::hexfloat << c.train_cfg.lr << "\n"
      << "lr_decay=" << c.train_cfg.lr_decay << "\n"
      << "clip=" << c.train_cfg.clip_norm << "\n"
      << "l2=" << c.train_cfg.l2 << "\n"
      << "dropout=" << c.train_cfg.dropout << "\n"
      << "best_metric=" << c.best_metric << std::defaultfloat << "\n"
      << "batch=" << c.train_cfg.batch_size << "\n"
      << "epochs=" << c.train_cfg.epochs << "\n"
      << "seed=" << c.train_cfg.seed << "\n"
      << "epoch=" << c.epoch << "\n"
      << "vocab_hash=" << c.vocab_hash << "\n"
      << "adam_step=" << c.adam.step << "\n"
      << "labels=" << encode_labels(c.label_names) << "\n";
  std::string cfg_str = cfg.str();
  write_u64(out, cfg_str.size());
  out.write(cfg_str.data(), static_cast<std::streamsize>(cfg_str.size()));

  write_u32(out,
            static_cast<uint32_t>(c.tensors.size() + 2 * c.adam.moments.size()));
  for (const auto& [name, t] : c.tensors) write_tensor(out, name, t);
  // Deterministic order for the moment tensors.
  std::map<std::string, const std::pair<Tensor, Tensor>*> ordered;
  for (const auto& [name, mv] : c.adam.moments) ordered.emplace(name, &mv);
  for (const auto& [name, mv] : ordered) {
    write_tensor(out, "adam.m." + name, mv->first);
    write_tensor(out, "adam.v." + name, mv->second);
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[sizeof(kMagic) - 1];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  uint32_t version = read_u32(in);
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));
  }
  uint64_t cfg_len = read_u64(in);
  std::string cfg_str(cfg_len, '\0');
  in.read(cfg_str.data(), static_cast<std::streamsize>(cfg_len));

  Checkpoint c;
  std::istringstream cfg(cfg_str);
  std::string line;
  while (std::getline(cfg, line)) {
    size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    if (key == "encoder") c.model_cfg.encoder = encoder_from_string(val);
    else if (key == "head") c.model_cfg.head = head_from_string(val);
    else if (key == "hidden") c.model_cfg.hidden = std::stol(val);
    else if (key == "emb_dim") c.model_cfg.emb_dim = std::stol(val);
    else if (key == "steps") c.model_cfg.steps = std::stoi(val);
    else if (key == "window") c.model_cfg.window = std::stoi(val);
    else if (key == "nodes") c.model_cfg.nodes = std::stoi(val);
    else if (key == "layers") c.model_cfg.layers = std::stoi(val);
    else if (key == "attn_size") c.model_cfg.attn_size = std::stol(val);
    else if (key == "n_classes") c.model_cfg.n_classes = std::stol(val);
    else if (key == "n_tags") c.model_cfg.n_tags = std::stol(val);
    else if (key == "fine_tune") c.model_cfg.fine_tune_embeddings = val == "1";
    else if (key == "model_seed") c.model_cfg.seed = std::stoull(val);
    else if (key == "lr") c.train_cfg.lr = std::strtod(val.c_str(), nullptr);
    else if (key == "lr_decay")
      c.train_cfg.lr_decay = std::strtod(val.c_str(), nullptr);
    else if (key == "clip")
      c.train_cfg.clip_norm = std::strtod(val.c_str(), nullptr);
    else if (key == "l2") c.train_cfg.l2 = std::strtod(val.c_str(), nullptr);
    else if (key == "dropout")
      c.train_cfg.dropout = std::strtod(val.c_str(), nullptr);
    else if (key == "best_metric")
      c.best_metric = std::strtod(val.c_str(), nullptr);
    else if (key == "batch") c.train_cfg.batch_size = std::stoi(val);
    else if (key == "epochs") c.train_cfg.epochs = std::stoi(val);
    else if (key == "seed") c.train_cfg.seed = std::stoull(val);
    else if (key == "epoch") c.epoch = std::stoi(val);
    else if (key == "vocab_hash") c.vocab_hash = std::stoull(val);
    else if (key == "adam_step") c.adam.step = std::stoll(val);
    else if (key == "labels") c.label_names = decode_labels(val);
  }

  uint32_t count = read_u32(in);
  for (uint32_t k = 0; k < count; ++k) {
    auto [name, tensor] = read_tensor(in);
    if (!in) throw std::runtime_error("truncated checkpoint: " + path);
    if (name.rfind("adam.m.", 0) == 0) {
      c.adam.moments[name.substr(7)].first = std::move(tensor);
    } else if (name.rfind("adam.v.", 0) == 0) {
      c.adam.moments[name.substr(7)].second = std::move(tensor);
    } else {
      c.tensors.emplace(std::move(name), std::move(tensor));
    }
  }
  return c;
}

}  // namespace sst
