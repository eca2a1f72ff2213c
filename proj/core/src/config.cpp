#include "optmig/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace optmig {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

[[noreturn]] void bad(std::string_view key, std::string_view value, std::string_view why) {
  throw Error(ErrorCode::ConfigInvalid,
              std::string(key) + " = '" + std::string(value) + "': " + std::string(why));
}

double parse_number(std::string_view key, std::string_view s) {
  const std::string str(trim(s));
  char* end = nullptr;
  const double v = std::strtod(str.c_str(), &end);
  if (str.empty() || end != str.c_str() + str.size()) bad(key, s, "not a number");
  return v;
}

std::uint64_t parse_u64(std::string_view key, std::string_view s) {
  s = trim(s);
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) bad(key, s, "not an unsigned integer");
  return v;
}

bool parse_bool(std::string_view key, std::string_view s) {
  const std::string v = lower(trim(s));
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad(key, s, "not a boolean");
}

Nanos parse_ns(std::string_view key, std::string_view s) {
  return Nanos{static_cast<std::int64_t>(parse_u64(key, s))};
}

void flatten(const nlohmann::json& j, const std::string& prefix,
             std::vector<std::pair<std::string, std::string>>& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    }
  } else if (j.is_string()) {
    out.emplace_back(prefix, j.get<std::string>());
  } else if (j.is_array()) {
    throw Error(ErrorCode::ConfigInvalid, prefix + ": arrays are not supported");
  } else {
    out.emplace_back(prefix, j.dump());
  }
}

}  // namespace

Bytes parse_size(std::string_view s) {
  const std::string_view t = trim(s);
  std::size_t i = 0;
  while (i < t.size() && (std::isdigit(static_cast<unsigned char>(t[i])) || t[i] == '.')) ++i;
  if (i == 0) throw Error(ErrorCode::ConfigInvalid, "size '" + std::string(s) + "' has no number");
  const double n = parse_number("size", t.substr(0, i));
  std::string unit = lower(trim(t.substr(i)));
  if (unit.ends_with("ib")) unit.resize(unit.size() - 2);
  else if (unit.size() > 1 && unit.ends_with("b")) unit.resize(unit.size() - 1);
  static const std::unordered_map<std::string, Bytes> units{
      {"", 1}, {"b", 1}, {"k", KiB}, {"m", MiB}, {"g", GiB}, {"t", 1024 * GiB}};
  auto it = units.find(unit);
  if (it == units.end()) throw Error(ErrorCode::ConfigInvalid, "unknown size unit in '" + std::string(s) + "'");
  if (n < 0) throw Error(ErrorCode::ConfigInvalid, "negative size");
  return static_cast<Bytes>(std::llround(n * double(it->second)));
}

double parse_bandwidth(std::string_view s) {
  const std::string v = lower(trim(s));
  static const std::pair<std::string_view, double> units[] = {
      {"gbps", 1e9}, {"mbps", 1e6}, {"kbps", 1e3}, {"bps", 1}};
  for (const auto& [suffix, scale] : units) {
    if (v.ends_with(suffix)) {
      return parse_number("bandwidth", std::string_view(v).substr(0, v.size() - suffix.size())) *
             scale / 8.0;
    }
  }
  const double bytes = parse_number("bandwidth", v);
  if (bytes <= 0) throw Error(ErrorCode::ConfigInvalid, "bandwidth must be positive");
  return bytes;
}

void apply_setting(ExperimentConfig& cfg, std::string_view raw_key, std::string_view value) {
  const std::string key = lower(trim(raw_key));
  const std::string_view v = trim(value);
  WorkloadSpec& w = cfg.workload;

  if (key == "workload" || key == "workload.kind") w.kind = workload_from_string(v);
  else if (key == "workload.heap" || key == "heap") w.heap_bytes = parse_size(v);
  else if (key == "workload.working_set") w.working_set_bytes = parse_size(v);
  else if (key == "workload.ops" || key == "ops") w.ops = parse_u64(key, v);
  else if (key == "workload.seed") w.seed = parse_u64(key, v);
  else if (key == "workload.op_cost_ns") w.op_cost = parse_ns(key, v);
  else if (key == "workload.keys") w.keys = parse_u64(key, v);
  else if (key == "workload.value_size") w.value_size = parse_size(v);
  else if (key == "workload.set_percent") w.set_percent = static_cast<unsigned>(parse_u64(key, v));
  else if (key == "workload.region_a") w.region_a_bytes = parse_size(v);
  else if (key == "workload.region_b") w.region_b_bytes = parse_size(v);
  else if (key == "workload.hot_region") {
    if (v.size() != 1) bad(key, v, "expected A or B");
    w.hot_region = static_cast<char>(std::toupper(static_cast<unsigned char>(v[0])));
  }
  else if (key == "protocol") cfg.protocol = protocol_from_string(v);
  else if (key == "placement") cfg.placement = placement_from_string(v);
  else if (key == "enclave.max_heap") cfg.enclave.max_heap_bytes = parse_size(v);
  else if (key == "enclave.committed") cfg.enclave.committed_bytes = parse_size(v);
  else if (key == "enclave.per_page_add_cost_ns") cfg.enclave.per_page_add_cost = parse_ns(key, v);
  else if (key == "enclave.memory") {
    const std::string m = lower(v);
    if (m == "enclave") cfg.enclave.kind = MemoryKind::EnclaveBacked;
    else if (m == "plain") cfg.enclave.kind = MemoryKind::Plain;
    else bad(key, v, "expected enclave or plain");
  }
  else if (key == "host.lookup") {
    const std::string m = lower(v);
    if (m == "linear") cfg.host.lookup = LookupStrategy::Linear;
    else if (m == "interval") cfg.host.lookup = LookupStrategy::Interval;
    else bad(key, v, "expected linear or interval");
  }
  else if (key == "host.data_segment") cfg.host.segments.data_bytes = parse_size(v);
  else if (key == "host.bss_segment") cfg.host.segments.bss_bytes = parse_size(v);
  else if (key == "link.bandwidth") cfg.link.bandwidth = parse_bandwidth(v);
  else if (key == "link.latency_ns") cfg.link.one_way_latency = parse_ns(key, v);
  else if (key == "migration.window") cfg.migration.window = parse_u64(key, v);
  else if (key == "migration.v2_committed") cfg.migration.v2_committed_bytes = parse_size(v);
  else if (key == "migration.dirty_threshold") cfg.migration.dirty_threshold = parse_u64(key, v);
  else if (key == "migration.max_rounds") cfg.migration.max_rounds = parse_u64(key, v);
  else if (key == "migration.jitter_steps") cfg.migration.jitter_steps = parse_bool(key, v);
  else if (key == "trigger_op") cfg.trigger_op = parse_u64(key, v);
  else if (key == "trigger_fraction") cfg.trigger_fraction = parse_number(key, v);
  else if (key == "migrate") cfg.migrate = parse_bool(key, v);
  else if (key == "seed") {
    cfg.seed = parse_u64(key, v);
    w.seed = cfg.seed;
  }
  else if (key == "shuffle_ties") cfg.shuffle_ties = parse_bool(key, v);
  else if (key == "jitter_ns") cfg.jitter = parse_ns(key, v);
  else if (key == "timeline_bucket_ns") cfg.timeline_bucket = parse_ns(key, v);
  else if (key == "verify_oracle") cfg.verify_oracle = parse_bool(key, v);
  else if (key == "compare_heap") cfg.compare_heap = parse_bool(key, v);
  else if (key == "record_events") cfg.record_events = parse_bool(key, v);
  else if (key == "output") cfg.output = std::string(v);
  else if (key == "event_log") cfg.event_log = std::string(v);
  else if (key == "format") {
    const std::string f = lower(v);
    if (f == "json") cfg.format = ReportFormat::Json;
    else if (f == "csv") cfg.format = ReportFormat::Csv;
    else bad(key, v, "expected json or csv");
  }
  else throw Error(ErrorCode::ConfigInvalid, "unknown setting '" + std::string(raw_key) + "'");
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::vector<std::pair<std::string, std::string>> settings;
  if (trim(text).starts_with("{")) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ConfigInvalid, std::string("bad JSON config: ") + e.what());
    }
    flatten(j, "", settings);
  } else {
    std::istringstream in{std::string(text)};
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
      ++n;
      std::string_view l = line;
      if (auto hash = l.find('#'); hash != std::string_view::npos) l = l.substr(0, hash);
      l = trim(l);
      if (l.empty()) continue;
      const auto eq = l.find('=');
      if (eq == std::string_view::npos) {
        throw Error(ErrorCode::ConfigInvalid, "line " + std::to_string(n) + ": expected key = value");
      }
      settings.emplace_back(std::string(trim(l.substr(0, eq))), std::string(trim(l.substr(eq + 1))));
    }
  }
  // The seed goes first so an explicit workload.seed can still override it.
  std::stable_partition(settings.begin(), settings.end(),
                        [](const auto& kv) { return lower(kv.first) == "seed"; });
  for (const auto& [k, v] : settings) apply_setting(cfg, k, v);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigInvalid, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_env_overrides(ExperimentConfig& cfg) {
  if (const char* s = std::getenv("MIGBENCH_SEED"); s && *s) apply_setting(cfg, "seed", s);
}

}  // namespace optmig
