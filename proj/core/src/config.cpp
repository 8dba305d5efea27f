#include "dora/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace dora {
namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  std::istringstream in(value);
  in >> out;
  if (in.fail() || !(in >> std::ws).eof())
    throw config_error("config: bad value for " + key + ": '" + value + "'");
  return out;
}

struct Field {
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> f;
    auto num = [&f](const std::string& key, auto member) {
      using T = std::decay_t<decltype(std::declval<TrainConfig>().*member)>;
      f[key] = Field{
          [key, member](TrainConfig& c, const std::string& v) {
            c.*member = parse_number<T>(key, v);
          },
          [member](const TrainConfig& c) {
            if constexpr (std::is_same_v<T, double>)
              return fmt_double(c.*member);
            else
              return std::to_string(c.*member);
          }};
    };
    auto str = [&f](const std::string& key, auto member) {
      f[key] = Field{
          [member](TrainConfig& c, const std::string& v) { c.*member = v; },
          [member](const TrainConfig& c) { return c.*member; }};
    };
    num("lr_base", &TrainConfig::lr_base);
    num("lr_min", &TrainConfig::lr_min);
    num("warmup_steps", &TrainConfig::warmup_steps);
    num("total_steps", &TrainConfig::total_steps);
    num("weight_decay", &TrainConfig::weight_decay);
    str("optimizer", &TrainConfig::optimizer);
    num("sgd_momentum", &TrainConfig::sgd_momentum);
    num("batch_clips", &TrainConfig::batch_clips);
    num("k_objects", &TrainConfig::k_objects);
    num("clip_frames", &TrainConfig::clip_frames);
    num("clip_stride", &TrainConfig::clip_stride);
    num("sk_epsilon", &TrainConfig::sk_epsilon);
    num("sk_tolerance", &TrainConfig::sk_tolerance);
    num("sk_max_iterations", &TrainConfig::sk_max_iterations);
    num("ema_alpha", &TrainConfig::ema_alpha);
    str("ema_schedule", &TrainConfig::ema_schedule);
    num("tau_student", &TrainConfig::tau_student);
    num("tau_teacher", &TrainConfig::tau_teacher);
    num("center_momentum", &TrainConfig::center_momentum);
    num("head_out_dim", &TrainConfig::head_out_dim);
    num("dim", &TrainConfig::dim);
    num("heads", &TrainConfig::heads);
    num("heads_last", &TrainConfig::heads_last);
    num("depth", &TrainConfig::depth);
    num("patch", &TrainConfig::patch);
    str("tracker_layer", &TrainConfig::tracker_layer);
    num("crop_size", &TrainConfig::crop_size);
    num("global_size", &TrainConfig::global_size);
    num("local_size", &TrainConfig::local_size);
    num("n_local", &TrainConfig::n_local);
    num("global_scale_min", &TrainConfig::global_scale_min);
    num("global_scale_max", &TrainConfig::global_scale_max);
    num("local_scale_min", &TrainConfig::local_scale_min);
    num("local_scale_max", &TrainConfig::local_scale_max);
    num("seed", &TrainConfig::seed);
    num("checkpoint_every", &TrainConfig::checkpoint_every);
    return f;
  }();
  return table;
}

void set_key(TrainConfig& cfg, const std::string& key, const std::string& value) {
  auto it = fields().find(key);
  if (it == fields().end()) throw config_error("config: unknown key '" + key + "'");
  it->second.set(cfg, value);
}

}  // namespace

void TrainConfig::validate() const {
  if (lr_min > lr_base) throw config_error("config: lr_min must be <= lr_base");
  if (warmup_steps < 0 || warmup_steps >= total_steps)
    throw config_error("config: need 0 <= warmup_steps < total_steps");
  if (k_objects < 1) throw config_error("config: k_objects must be >= 1");
  if (clip_frames < 1) throw config_error("config: clip_frames must be >= 1");
  if (batch_clips < 1) throw config_error("config: batch_clips must be >= 1");
  if (optimizer != "adam" && optimizer != "sgd")
    throw config_error("config: optimizer must be adam or sgd");
  if (ema_schedule != "constant" && ema_schedule != "cosine")
    throw config_error("config: ema_schedule must be constant or cosine");
  if (ema_alpha < 0.0 || ema_alpha > 1.0)
    throw config_error("config: ema_alpha must be in [0,1]");
  if (tracker_layer != "last" && tracker_layer != "second_last")
    throw config_error("config: tracker_layer must be last or second_last");
  if (n_local < 1) throw config_error("config: n_local must be >= 1");
  if (crop_size < global_size)
    throw config_error("config: crop_size must be >= global_size");
  encoder_config().validate();
  if (k_objects > (tracker_layer == "last" ? heads_last : heads))
    throw config_error(
        "config: k_objects exceeds the tracker-source head count; raise "
        "heads_last (final-block reconfiguration) or lower k_objects");
}

EncoderConfig TrainConfig::encoder_config() const {
  EncoderConfig e;
  e.dim = dim;
  e.heads = heads;
  e.heads_last = heads_last;
  e.depth = depth;
  e.patch = patch;
  e.channels = 3;
  e.resolutions = {global_size};
  if (local_size != global_size) e.resolutions.push_back(local_size);
  e.tracker_layer =
      tracker_layer == "last" ? TrackerLayer::last : TrackerLayer::second_last;
  return e;
}

TrainConfig parse_config_string(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw config_error("config: line " + std::to_string(line_no) +
                         " is not 'key = value'");
    set_key(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return cfg;
}

TrainConfig parse_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error(path + ": cannot open config file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_string(buf.str());
}

void apply_override(TrainConfig& cfg, const std::string& assignment) {
  size_t eq = assignment.find('=');
  if (eq == std::string::npos)
    throw config_error("override '" + assignment + "' is not key=value");
  std::string key = trim(assignment.substr(0, eq));
  std::string value = trim(assignment.substr(eq + 1));
  set_key(cfg, key, value);
}

std::string config_to_string(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [key, field] : fields())
    out += key + " = " + field.get(cfg) + "\n";
  return out;
}

}  // namespace dora
