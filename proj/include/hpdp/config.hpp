#pragma once

// Training configuration and the human-editable config file format.
//
// Config files are either JSON or a small key = value format with optional
// [section] headers:
//
//   # comment
//   seed = 3
//   [train]
//   lr_init = 3e-4
//   task = "survival"
//   [data]
//   tumor_fraction_ranges = [[0.05, 0.35], [0.55, 0.85]]
//
// Values are parsed as JSON scalars/arrays; bare words are taken as strings.

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

namespace hpdp {

enum class Task { Classification, Survival };

std::string to_string(Task t);
Task task_from_string(const std::string& s);

struct Toggles {
  bool spe = true;
  bool maps = true;
  bool hcma = true;
  bool text = true;
  friend bool operator==(const Toggles&, const Toggles&) = default;
};

struct TrainConfig {
  double lr_init = 3e-4;
  double lr_final = 1e-4;
  double weight_decay = 1e-5;
  int max_epochs = 200;
  int patience = 20;
  double lambda = 0.1;

  int dim = 32;
  int k_sup = 4;
  int k_free = 4;
  double tau_cos = 0.1;
  double tau_dot = 0.0;  // 0 selects sqrt(dim)
  double tau_proto = 0.07;
  int n_heads = 4;
  double expert_init_noise = 0.01;

  Task task = Task::Classification;
  Toggles toggles;

  int accumulation = 8;  // bags per optimizer step (classification)
  int cox_batch = 0;     // subjects per Cox batch; 0 = whole training cohort
  double cox_eps = 1e-8;
  int threads = 1;
  std::uint64_t seed = 0;

  double effective_tau_dot() const;
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

nlohmann::json parse_config_text(const std::string& text);
// JSON when the file starts with '{', otherwise key = value.
nlohmann::json load_config_file(const std::filesystem::path& path);

}  // namespace hpdp
