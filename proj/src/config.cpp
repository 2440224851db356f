#include "hpdp/config.hpp"

#include "hpdp/common.hpp"
#include "hpdp/io.hpp"

#include <cmath>
#include <sstream>

namespace hpdp {

using nlohmann::json;

std::string to_string(Task t) { return t == Task::Classification ? "classification" : "survival"; }

Task task_from_string(const std::string& s) {
  if (s == "classification") return Task::Classification;
  if (s == "survival") return Task::Survival;
  throw ConfigError("task must be \"classification\" or \"survival\", got \"" + s + "\"");
}

double TrainConfig::effective_tau_dot() const { return tau_dot > 0.0 ? tau_dot : std::sqrt(double(dim)); }

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (!(lr_init >= 0.0) || !(lr_final >= 0.0)) fail("lr_init and lr_final must be ≥ 0");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be ≥ 0");
  if (max_epochs < 1) fail("max_epochs must be ≥ 1");
  if (patience < 1 || patience > max_epochs) fail("patience must lie in [1, max_epochs]");
  if (!(lambda >= 0.0)) fail("lambda must be ≥ 0");
  if (dim < 4 || dim % 4 != 0) fail("dim must be a positive multiple of 4");
  if (k_sup < 1) fail("k_sup must be ≥ 1");
  if (k_free < 0) fail("k_free must be ≥ 0");
  if (!(tau_cos > 0.0) || !(tau_proto > 0.0) || tau_dot < 0.0) fail("temperatures must be positive");
  if (n_heads < 1 || dim % n_heads != 0) fail("dim must be divisible by n_heads");
  if (!(expert_init_noise >= 0.0)) fail("expert_init_noise must be ≥ 0");
  if (toggles.hcma && !toggles.text) fail("toggle hcma requires toggle text");
  if (accumulation < 1) fail("accumulation must be ≥ 1");
  if (cox_batch < 0 || cox_batch == 1) fail("cox_batch must be 0 (whole cohort) or ≥ 2");
  if (!(cox_eps >= 0.0)) fail("cox_eps must be ≥ 0");
  if (threads < 1) fail("threads must be ≥ 1");
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"lr_init", c.lr_init},
           {"lr_final", c.lr_final},
           {"weight_decay", c.weight_decay},
           {"max_epochs", c.max_epochs},
           {"patience", c.patience},
           {"lambda", c.lambda},
           {"dim", c.dim},
           {"k_sup", c.k_sup},
           {"k_free", c.k_free},
           {"tau_cos", c.tau_cos},
           {"tau_dot", c.tau_dot},
           {"tau_proto", c.tau_proto},
           {"n_heads", c.n_heads},
           {"expert_init_noise", c.expert_init_noise},
           {"task", to_string(c.task)},
           {"use_spe", c.toggles.spe},
           {"use_maps", c.toggles.maps},
           {"use_hcma", c.toggles.hcma},
           {"use_text", c.toggles.text},
           {"accumulation", c.accumulation},
           {"cox_batch", c.cox_batch},
           {"cox_eps", c.cox_eps},
           {"seed", c.seed}};
}

void from_json(const json& j, TrainConfig& c) {
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(field);
    } catch (const json::exception&) {
      throw ConfigError(std::string("invalid value for ") + key);
    }
  };
  get("lr_init", c.lr_init);
  get("lr_final", c.lr_final);
  get("weight_decay", c.weight_decay);
  get("max_epochs", c.max_epochs);
  get("patience", c.patience);
  get("lambda", c.lambda);
  get("dim", c.dim);
  get("k_sup", c.k_sup);
  get("k_free", c.k_free);
  get("tau_cos", c.tau_cos);
  get("tau_dot", c.tau_dot);
  get("tau_proto", c.tau_proto);
  get("n_heads", c.n_heads);
  get("expert_init_noise", c.expert_init_noise);
  get("use_spe", c.toggles.spe);
  get("use_maps", c.toggles.maps);
  get("use_hcma", c.toggles.hcma);
  get("use_text", c.toggles.text);
  get("accumulation", c.accumulation);
  get("cox_batch", c.cox_batch);
  get("cox_eps", c.cox_eps);
  get("seed", c.seed);
  if (j.contains("task")) {
    if (!j.at("task").is_string()) throw ConfigError("invalid value for task");
    c.task = task_from_string(j.at("task").get<std::string>());
  }
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Drops a trailing '#' comment that is not inside a quoted string.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

}  // namespace

json parse_config_text(const std::string& text) {
  json root = json::object();
  json* section = &root;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      const std::string name = trim(line.substr(1, line.size() - 2));
      if (name.empty()) throw ConfigError(where + ": empty section name");
      root[name] = json::object();
      section = &root[name];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError(where + ": expected key = value");
    json parsed = json::parse(value, nullptr, false);
    (*section)[key] = parsed.is_discarded() ? json(value) : parsed;
  }
  return root;
}

json load_config_file(const std::filesystem::path& path) {
  const std::string text = io::read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ConfigError(path.string() + ": malformed JSON");
    return j;
  }
  return parse_config_text(text);
}

}  // namespace hpdp
