#include "camkd/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <type_traits>

#include "camkd/errors.hpp"

namespace camkd {

namespace {

using nlohmann::json;

template <typename T>
struct is_vector : std::false_type {};
template <typename T>
struct is_vector<std::vector<T>> : std::true_type {};

template <typename T>
void check_unsigned(const json& v, const std::string& key) {
  if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    if (!v.is_number_unsigned()) {
      throw ConfigError("config key '" + key + "' must be a non-negative integer");
    }
  } else if constexpr (is_vector<T>::value) {
    if (!v.is_array()) throw ConfigError("config key '" + key + "' must be an array");
    for (const json& item : v) check_unsigned<typename T::value_type>(item, key);
  }
}

template <typename T>
T get_as(const json& v, const std::string& key) {
  check_unsigned<T>(v, key);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

template <typename E, typename Parse>
E get_enum(const json& v, const std::string& key, Parse parse) {
  const auto name = get_as<std::string>(v, key);
  const auto parsed = parse(name);
  if (!parsed) throw ConfigError("config key '" + key + "': unknown value '" + name + "'");
  return *parsed;
}

using Setter = std::function<void(ExperimentConfig&, const json&, const std::string&)>;

template <typename T, typename Field>
Setter field(Field f) {
  return [f](ExperimentConfig& c, const json& v, const std::string& key) {
    f(c) = get_as<T>(v, key);
  };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"data_dir", field<std::string>([](auto& c) -> auto& { return c.data_dir; })},
      {"samples", field<std::size_t>([](auto& c) -> auto& { return c.dataset.samples; })},
      {"input_width", field<std::size_t>([](auto& c) -> auto& { return c.dataset.input_width; })},
      {"classes", field<std::size_t>([](auto& c) -> auto& { return c.dataset.classes; })},
      {"clusters_per_class",
       field<std::size_t>([](auto& c) -> auto& { return c.dataset.clusters_per_class; })},
      {"blob_std", field<double>([](auto& c) -> auto& { return c.dataset.blob_std; })},
      {"separation", field<double>([](auto& c) -> auto& { return c.dataset.separation; })},
      {"train_fraction", field<double>([](auto& c) -> auto& { return c.dataset.train_fraction; })},
      {"data_seed", field<std::uint64_t>([](auto& c) -> auto& { return c.dataset.seed; })},
      {"teacher_widths",
       field<std::vector<std::size_t>>([](auto& c) -> auto& { return c.teacher_widths; })},
      {"teacher_noise", field<std::vector<double>>([](auto& c) -> auto& { return c.teacher_noise; })},
      {"teacher_seeds",
       field<std::vector<std::uint64_t>>([](auto& c) -> auto& { return c.teacher_seeds; })},
      {"teacher_dir", field<std::string>([](auto& c) -> auto& { return c.teacher_dir; })},
      {"student_widths",
       field<std::vector<std::size_t>>([](auto& c) -> auto& { return c.student_widths; })},
      {"strategy",
       [](ExperimentConfig& c, const json& v, const std::string& k) {
         c.distill.strategy = get_enum<Strategy>(v, k, parse_strategy);
       }},
      {"kd_target_form",
       [](ExperimentConfig& c, const json& v, const std::string& k) {
         c.distill.kd_target_form = get_enum<KdTargetForm>(v, k, parse_kd_target_form);
       }},
      {"inter_weight_source",
       [](ExperimentConfig& c, const json& v, const std::string& k) {
         c.distill.inter_weight_source = get_enum<InterWeightSource>(v, k, parse_inter_weight_source);
       }},
      {"tau", field<double>([](auto& c) -> auto& { return c.distill.tau; })},
      {"tau_conf", field<double>([](auto& c) -> auto& { return c.distill.tau_conf; })},
      {"alpha", field<double>([](auto& c) -> auto& { return c.distill.alpha; })},
      {"beta", field<double>([](auto& c) -> auto& { return c.distill.beta; })},
      {"tau_square_scaling",
       field<bool>([](auto& c) -> auto& { return c.distill.tau_square_scaling; })},
      {"detach_weights", field<bool>([](auto& c) -> auto& { return c.distill.detach_weights; })},
      {"epochs", field<std::size_t>([](auto& c) -> auto& { return c.train.schedule.epochs; })},
      {"lr", field<double>([](auto& c) -> auto& { return c.train.schedule.base_lr; })},
      {"milestones",
       field<std::vector<std::size_t>>([](auto& c) -> auto& { return c.train.schedule.milestones; })},
      {"lr_decay", field<double>([](auto& c) -> auto& { return c.train.schedule.decay; })},
      {"batch_size", field<std::size_t>([](auto& c) -> auto& { return c.train.batch_size; })},
      {"momentum", field<double>([](auto& c) -> auto& { return c.train.momentum; })},
      {"weight_decay", field<double>([](auto& c) -> auto& { return c.train.weight_decay; })},
      {"seed", field<std::uint64_t>([](auto& c) -> auto& { return c.seed; })},
      {"seeds", field<std::vector<std::uint64_t>>([](auto& c) -> auto& { return c.seeds; })},
      {"k_list", field<std::vector<std::size_t>>([](auto& c) -> auto& { return c.k_list; })},
      {"probe_size", field<std::size_t>([](auto& c) -> auto& { return c.probe_size; })},
      {"out_dir", field<std::string>([](auto& c) -> auto& { return c.out_dir; })},
  };
  return table;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (data_dir.empty()) {
    try {
      dataset.validate();
    } catch (const ParameterError& e) {
      throw ConfigError(e.what());
    }
  }
  if (teacher_widths.empty() || student_widths.empty()) {
    throw ConfigError("teacher_widths and student_widths need at least one block");
  }
  for (const std::size_t w : teacher_widths) {
    if (w == 0) throw ConfigError("teacher_widths must be positive");
  }
  for (const std::size_t w : student_widths) {
    if (w == 0) throw ConfigError("student_widths must be positive");
  }
  if (teacher_noise.empty()) throw ConfigError("teacher_noise must list at least one teacher");
  for (const double f : teacher_noise) {
    if (!(f >= 0.0 && f < 1.0)) throw ConfigError("teacher_noise entries must lie in [0, 1)");
  }
  if (teacher_seeds.size() != teacher_noise.size()) {
    throw ConfigError("teacher_seeds must have one entry per teacher_noise entry");
  }
  DistillConfig d = distill;
  d.teachers = teacher_count();
  d.validate();
  train.validate();
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  for (const std::size_t k : k_list) {
    if (k == 0 || k > teacher_count()) {
      throw ConfigError("k_list entries must lie in 1.." + std::to_string(teacher_count()));
    }
  }
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
}

std::vector<std::size_t> ExperimentConfig::teacher_layer_widths(std::size_t input_width) const {
  std::vector<std::size_t> w{input_width};
  w.insert(w.end(), teacher_widths.begin(), teacher_widths.end());
  return w;
}

std::vector<std::size_t> ExperimentConfig::student_layer_widths(std::size_t input_width) const {
  std::vector<std::size_t> w{input_width};
  w.insert(w.end(), student_widths.begin(), student_widths.end());
  return w;
}

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig cfg;
  const auto& table = setters();
  for (const auto& [key, value] : j.items()) {
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(cfg, value, key);
  }
  cfg.distill.teachers = cfg.teacher_count();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

json config_to_json(const ExperimentConfig& c) {
  return json{
      {"data_dir", c.data_dir},
      {"samples", c.dataset.samples},
      {"input_width", c.dataset.input_width},
      {"classes", c.dataset.classes},
      {"clusters_per_class", c.dataset.clusters_per_class},
      {"blob_std", c.dataset.blob_std},
      {"separation", c.dataset.separation},
      {"train_fraction", c.dataset.train_fraction},
      {"data_seed", c.dataset.seed},
      {"teacher_widths", c.teacher_widths},
      {"teacher_noise", c.teacher_noise},
      {"teacher_seeds", c.teacher_seeds},
      {"teacher_dir", c.teacher_dir},
      {"student_widths", c.student_widths},
      {"strategy", to_string(c.distill.strategy)},
      {"kd_target_form", to_string(c.distill.kd_target_form)},
      {"inter_weight_source", to_string(c.distill.inter_weight_source)},
      {"tau", c.distill.tau},
      {"tau_conf", c.distill.tau_conf},
      {"alpha", c.distill.alpha},
      {"beta", c.distill.beta},
      {"tau_square_scaling", c.distill.tau_square_scaling},
      {"detach_weights", c.distill.detach_weights},
      {"epochs", c.train.schedule.epochs},
      {"lr", c.train.schedule.base_lr},
      {"milestones", c.train.schedule.milestones},
      {"lr_decay", c.train.schedule.decay},
      {"batch_size", c.train.batch_size},
      {"momentum", c.train.momentum},
      {"weight_decay", c.train.weight_decay},
      {"seed", c.seed},
      {"seeds", c.seeds},
      {"k_list", c.k_list},
      {"probe_size", c.probe_size},
      {"out_dir", c.out_dir},
  };
}

void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << config_to_json(cfg).dump(2) << '\n';
}

}  // namespace camkd
