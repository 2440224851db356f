#include "hpdp/checkpoint.hpp"
#include "hpdp/io.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <unistd.h>

using namespace hpdp;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& tag)
      : path_(fs::temp_directory_path() / ("hpdp_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

Checkpoint make_checkpoint(Toggles toggles, Task task) {
  GeneratorConfig g;
  g.n_bags = 6;
  g.instances_min = 6;
  g.instances_max = 8;
  g.dim = 8;
  const auto bags = generate_cohort(g);
  TrainConfig cfg;
  cfg.dim = 8;
  cfg.k_sup = 2;
  cfg.k_free = 3;
  cfg.toggles = toggles;
  cfg.task = task;
  cfg.seed = 17;
  const ModelShape shape = shape_for(cfg, bags);
  const MatrixXd teachers = fit_teachers(bags, cfg);
  return {cfg, shape, init_params(cfg, shape, teachers), teachers, 4, 0.8125};
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  const TempDir tmp("ckpt_rt");
  const Toggles variants[] = {{true, true, true, true}, {false, true, false, true}, {false, false, false, false}};
  int i = 0;
  for (const auto& t : variants)
    for (Task task : {Task::Classification, Task::Survival}) {
      const Checkpoint c = make_checkpoint(t, task);
      const fs::path dir = tmp.path() / std::to_string(i++);
      save_checkpoint(dir, c);
      EXPECT_EQ(load_checkpoint(dir), c);
    }
}

TEST(Checkpoint, RepeatedSavesAreByteIdentical) {
  const TempDir tmp("ckpt_bytes");
  const Checkpoint c = make_checkpoint({true, true, true, true}, Task::Classification);
  save_checkpoint(tmp.path() / "a", c);
  save_checkpoint(tmp.path() / "b", c);
  for (const char* f : {"checkpoint.json", "arrays.bin"})
    EXPECT_EQ(io::read_file(tmp.path() / "a" / f), io::read_file(tmp.path() / "b" / f)) << f;
}

TEST(Checkpoint, CorruptInputsAreInputErrors) {
  const TempDir tmp("ckpt_bad");
  const Checkpoint c = make_checkpoint({true, true, true, true}, Task::Classification);
  const fs::path dir = tmp.path() / "c";
  save_checkpoint(dir, c);
  const std::string manifest = io::read_file(dir / "checkpoint.json");
  const std::string blob = io::read_file(dir / "arrays.bin");

  EXPECT_THROW(load_checkpoint(tmp.path() / "missing"), InputError);

  auto j = nlohmann::json::parse(manifest);
  j["format"] = "SOMETHING";
  io::write_file_atomic(dir / "checkpoint.json", j.dump());
  EXPECT_THROW(load_checkpoint(dir), InputError);

  j = nlohmann::json::parse(manifest);
  j["arrays"][0]["rows"] = 3;
  io::write_file_atomic(dir / "checkpoint.json", j.dump());
  EXPECT_THROW(load_checkpoint(dir), InputError);

  io::write_file_atomic(dir / "checkpoint.json", manifest);
  io::write_file_atomic(dir / "arrays.bin", blob.substr(0, blob.size() / 2));
  EXPECT_THROW(load_checkpoint(dir), InputError);

  io::write_file_atomic(dir / "checkpoint.json", "{not json");
  EXPECT_THROW(load_checkpoint(dir), InputError);
}

TEST(Prototypes, RoundTrip) {
  const TempDir tmp("protos");
  PrototypeBank bank;
  bank.teachers = (MatrixXd(2, 3) << 0.1, -2, 3e-9, 4, 5.5, -6).finished();
  bank.inertia = 12.25;
  bank.assignments = {0, 1, 1, 0};
  bank.inertia_trace = {20.0, 12.5, 12.25};
  bank.iterations = 3;
  save_prototypes(tmp.path(), bank);
  const PrototypeBank back = load_prototypes(tmp.path());
  EXPECT_EQ(back.teachers, bank.teachers);
  EXPECT_EQ(back.inertia, bank.inertia);
  EXPECT_EQ(back.assignments, bank.assignments);
  EXPECT_EQ(back.inertia_trace, bank.inertia_trace);
  EXPECT_EQ(back.iterations, bank.iterations);
  EXPECT_THROW(load_checkpoint(tmp.path()), InputError);
}

TEST(BinaryMatrix, RoundTripAndMagic) {
  const TempDir tmp("matrix");
  fs::create_directories(tmp.path());
  const MatrixXd m = (MatrixXd(2, 3) << 1, 2, 3, 4, 5, 6).finished();
  io::write_matrix(tmp.path() / "m.bin", m);
  EXPECT_EQ(io::read_matrix(tmp.path() / "m.bin"), m);
  const std::string bytes = io::read_file(tmp.path() / "m.bin");
  ASSERT_EQ(bytes.size(), 8u + 8u + 6u * 8u);
  EXPECT_EQ(bytes.substr(0, 8), "HPDPBAG1");
  double second;
  std::memcpy(&second, bytes.data() + 16 + 8, 8);
  EXPECT_EQ(second, 2.0);  // row-major
  EXPECT_THROW(io::read_matrix(tmp.path() / "m.bin", "OTHERMAG"), InputError);
}
