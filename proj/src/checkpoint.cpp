#include "hpdp/checkpoint.hpp"

#include "hpdp/io.hpp"

#include <json.hpp>

#include <string>
#include <utility>
#include <vector>

namespace hpdp {

using nlohmann::json;

namespace {

using NamedConst = std::vector<std::pair<std::string, const MatrixXd*>>;
using NamedMut = std::vector<std::pair<std::string, MatrixXd*>>;

json pack(const NamedConst& arrays, std::vector<char>& blob) {
  json index = json::array();
  std::size_t offset = 0;
  for (const auto& [name, m] : arrays) {
    index.push_back({{"name", name}, {"offset", offset}, {"rows", m->rows()}, {"cols", m->cols()}});
    io::append_f64(blob, *m);
    offset += static_cast<std::size_t>(m->size());
  }
  return index;
}

// Fills every target from the blob; the index must list exactly these names with matching shapes.
void unpack(const json& index, const std::string& blob, const NamedMut& targets, const std::string& where) {
  if (!index.is_array() || index.size() != targets.size())
    throw InputError(where + ": array index does not match the configured model");
  const std::size_t total = blob.size() / sizeof(double);
  if (blob.size() % sizeof(double) != 0) throw InputError(where + ": truncated array blob");
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& rec = index[i];
    const auto& [name, m] = targets[i];
    const auto offset = rec.at("offset").get<std::size_t>();
    const auto rows = rec.at("rows").get<Eigen::Index>();
    const auto cols = rec.at("cols").get<Eigen::Index>();
    if (rec.at("name").get<std::string>() != name)
      throw InputError(where + ": expected array " + name + ", found " + rec.at("name").get<std::string>());
    if (rows != m->rows() || cols != m->cols())
      throw InputError(where + ": array " + name + " has shape " + std::to_string(rows) + "x" +
                       std::to_string(cols) + ", expected " + shape_str(m->rows(), m->cols()));
    if (offset + static_cast<std::size_t>(rows * cols) > total) throw InputError(where + ": array " + name + " past end of blob");
    *m = io::parse_f64(blob.data() + offset * sizeof(double), rows, cols);
  }
}

json read_manifest(const std::filesystem::path& path, const char* format) {
  json j = json::parse(io::read_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw InputError(path.string() + ": malformed JSON");
  if (j.value("format", std::string()) != format)
    throw InputError(path.string() + ": expected format " + std::string(format));
  return j;
}

void write_pair(const std::filesystem::path& dir, const json& manifest, const std::vector<char>& blob) {
  std::filesystem::create_directories(dir);
  io::write_file_atomic(dir / "arrays.bin", std::string_view(blob.data(), blob.size()));
  io::write_file_atomic(dir / "checkpoint.json", manifest.dump(2) + "\n");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
  NamedConst arrays = ckpt.params.arrays();
  arrays.emplace_back("teachers", &ckpt.teachers);
  std::vector<char> blob;
  json manifest = {{"format", kCheckpointFormat},
                   {"config", ckpt.config},
                   {"shape", {{"input_dim", ckpt.shape.input_dim}, {"out_dim", ckpt.shape.out_dim}}},
                   {"epoch", ckpt.epoch},
                   {"best_val", ckpt.best_val}};
  manifest["arrays"] = pack(arrays, blob);
  write_pair(dir, manifest, blob);
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto path = dir / "checkpoint.json";
  const json j = read_manifest(path, kCheckpointFormat);
  Checkpoint c;
  try {
    c.config = j.at("config").get<TrainConfig>();
    c.config.validate();
    c.shape.input_dim = j.at("shape").at("input_dim").get<int>();
    c.shape.out_dim = j.at("shape").at("out_dim").get<int>();
    c.epoch = j.at("epoch").get<int>();
    c.best_val = j.at("best_val").get<double>();
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  // Shapes come from a fresh init; values are then overwritten from the blob.
  const json& index = j.at("arrays");
  if (!index.is_array() || index.empty()) throw InputError(path.string() + ": missing array index");
  const auto& last = index.back();
  c.teachers = MatrixXd::Zero(last.at("rows").get<Eigen::Index>(), last.at("cols").get<Eigen::Index>());
  c.params = init_params(c.config, c.shape, c.config.toggles.maps ? c.teachers : MatrixXd());
  NamedMut targets = c.params.arrays();
  targets.emplace_back("teachers", &c.teachers);
  unpack(index, io::read_file(dir / "arrays.bin"), targets, dir.string());
  return c;
}

void save_prototypes(const std::filesystem::path& dir, const PrototypeBank& bank) {
  std::vector<char> blob;
  json manifest = {{"format", kPrototypeFormat},
                   {"k", bank.teachers.rows()},
                   {"dim", bank.teachers.cols()},
                   {"inertia", bank.inertia},
                   {"iterations", bank.iterations},
                   {"inertia_trace", bank.inertia_trace},
                   {"assignments", bank.assignments}};
  manifest["arrays"] = pack({{"teachers", &bank.teachers}}, blob);
  write_pair(dir, manifest, blob);
}

PrototypeBank load_prototypes(const std::filesystem::path& dir) {
  const auto path = dir / "checkpoint.json";
  const json j = read_manifest(path, kPrototypeFormat);
  PrototypeBank bank;
  try {
    bank.teachers = MatrixXd::Zero(j.at("k").get<Eigen::Index>(), j.at("dim").get<Eigen::Index>());
    bank.inertia = j.at("inertia").get<double>();
    bank.iterations = j.at("iterations").get<int>();
    bank.inertia_trace = j.at("inertia_trace").get<std::vector<double>>();
    bank.assignments = j.at("assignments").get<std::vector<int>>();
    unpack(j.at("arrays"), io::read_file(dir / "arrays.bin"), {{"teachers", &bank.teachers}}, dir.string());
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return bank;
}

}  // namespace hpdp
