#include "mixtea/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace mixtea {

namespace {

constexpr const char* kMagic = "mixtea-checkpoint";
constexpr int kVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_tensor(std::ostream& out, const std::string& name, const Tensor& t) {
  out << "tensor " << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
  char buf[32];
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", t(r, c));
      if (c) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

Tensor read_tensor(std::istream& in, const std::string& expected_name) {
  std::string tag, name;
  std::size_t rows = 0, cols = 0;
  if (!(in >> tag >> name >> rows >> cols) || tag != "tensor") {
    throw CheckpointError("checkpoint: malformed header for tensor " + expected_name);
  }
  if (name != expected_name) {
    throw CheckpointError("checkpoint: expected tensor " + expected_name + ", found " + name);
  }
  Tensor t(rows, cols);
  for (auto& v : t.data()) {
    if (!(in >> v)) throw CheckpointError("checkpoint: truncated data in tensor " + name);
  }
  return t;
}

template <typename T>
T read_field(std::istream& in, const char* key) {
  std::string k;
  T value{};
  if (!(in >> k >> value) || k != key) {
    throw CheckpointError(std::string("checkpoint: expected field ") + key);
  }
  return value;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  const auto& e = checkpoint.encoder;
  out << kMagic << ' ' << kVersion << '\n';
  out << "entity_dim " << e.entity_dim << '\n';
  out << "relation_dim " << e.relation_dim << '\n';
  out << "layers " << e.layers << '\n';
  out << "use_relations " << (e.use_relations ? 1 : 0) << '\n';
  const auto names = checkpoint.params.names();
  const auto tensors = checkpoint.params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) write_tensor(out, names[i], *tensors[i]);
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != kMagic) {
    throw CheckpointError(path.string() + " is not a checkpoint file");
  }
  if (version != kVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.encoder.entity_dim = read_field<std::size_t>(in, "entity_dim");
  ck.encoder.relation_dim = read_field<std::size_t>(in, "relation_dim");
  ck.encoder.layers = read_field<std::size_t>(in, "layers");
  ck.encoder.use_relations = read_field<int>(in, "use_relations") != 0;
  ck.encoder.validate();

  auto& p = ck.params;
  p.entity_emb = read_tensor(in, "entity_emb");
  p.relation_emb = read_tensor(in, "relation_emb");
  for (std::size_t l = 0; l < ck.encoder.layers; ++l) {
    p.gat_weight.push_back(read_tensor(in, "gat_weight." + std::to_string(l)));
  }
  for (std::size_t l = 0; l < ck.encoder.layers; ++l) {
    p.attn_vector.push_back(read_tensor(in, "attn_vector." + std::to_string(l)));
  }
  p.fusion_logits = read_tensor(in, "fusion_logits");
  validate_params(p, ck.encoder, p.entity_emb.rows(), p.relation_emb.rows());
  return ck;
}

}  // namespace mixtea
