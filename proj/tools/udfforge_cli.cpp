// udfforge command-line tool. Talks to the library only through the C API.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "udfforge/udfforge.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct ConfigDeleter {
  void operator()(udf_config* c) const { udf_config_free(c); }
};
using ConfigPtr = std::unique_ptr<udf_config, ConfigDeleter>;

struct StringDeleter {
  void operator()(char* s) const { udf_string_free(s); }
};
using StringPtr = std::unique_ptr<char, StringDeleter>;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<long long> seed;
  std::optional<int> threads;
  std::optional<std::string> out;
  bool verbose = false;
};

// A flag that maps onto a config key; `json` is the value as JSON text.
struct Override {
  std::string key;
  std::string json;
};

std::string json_string(const std::string& s) { return nlohmann::json(s).dump(); }

bool file_sets_seed(const std::string& path) {
  std::ifstream in(path);
  if (!in) return false;
  std::stringstream ss;
  ss << in.rdbuf();
  const auto j = nlohmann::json::parse(ss.str(), nullptr, false);
  return j.is_object() && j.contains("seed");
}

void check_setup(udf_status s) {
  if (s != UDF_OK) throw UsageError(udf_last_error());
}

// Defaults, then the config file, then UDFFORGE_SEED when nothing else set a
// seed, then flags and --set pairs in order.
ConfigPtr build_config(const CommonOptions& common, const std::vector<Override>& flags) {
  udf_config* raw = nullptr;
  if (common.config_path.empty()) {
    check_setup(udf_config_default(&raw));
  } else {
    check_setup(udf_config_load(common.config_path.c_str(), &raw));
  }
  ConfigPtr config(raw);

  if (common.seed) {
    check_setup(udf_config_set(raw, "seed", std::to_string(*common.seed).c_str()));
  } else if (common.config_path.empty() || !file_sets_seed(common.config_path)) {
    if (const char* env = std::getenv("UDFFORGE_SEED"); env && *env) {
      char* end = nullptr;
      const long long v = std::strtoll(env, &end, 10);
      if (*end != '\0') throw UsageError(std::string("UDFFORGE_SEED is not an integer: '") + env + "'");
      check_setup(udf_config_set(raw, "seed", std::to_string(v).c_str()));
    }
  }
  if (common.threads) {
    if (*common.threads < 1) throw UsageError("--threads must be at least 1");
    check_setup(udf_config_set(raw, "threads", std::to_string(*common.threads).c_str()));
  }
  if (common.out) check_setup(udf_config_set(raw, "paths.out_dir", json_string(*common.out).c_str()));
  for (const auto& o : flags) check_setup(udf_config_set(raw, o.key.c_str(), o.json.c_str()));
  for (const auto& kv : common.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + kv + "'");
    check_setup(udf_config_set(raw, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
  }
  return config;
}

void add_common(CLI::App* sub, CommonOptions& common) {
  sub->add_option("-c,--config", common.config_path, "JSON run config")->check(CLI::ExistingFile);
  sub->add_option("--set", common.sets, "Override a config key, e.g. train.total_iters=100");
  sub->add_option("--seed", common.seed, "Random seed (falls back to UDFFORGE_SEED)");
  sub->add_option("--threads", common.threads, "Maximum worker threads");
  sub->add_option("-o,--out", common.out, "Output directory");
  sub->add_flag("-v,--verbose", common.verbose, "Print progress");
}

// Registers an optional flag whose value becomes a config override.
template <typename T>
void add_mapped(CLI::App* sub, std::vector<std::function<void(std::vector<Override>&)>>& collectors,
                const std::string& name, const std::string& key, const std::string& help) {
  auto value = std::make_shared<std::optional<T>>();
  sub->add_option(name, *value, help);
  collectors.push_back([value, key](std::vector<Override>& out) {
    if (!*value) return;
    if constexpr (std::is_same_v<T, std::string>) {
      out.push_back(Override{key, json_string(**value)});
    } else {
      out.push_back(Override{key, nlohmann::json(**value).dump()});
    }
  });
}

void print_record(const char* record_json, void*) { std::fprintf(stderr, "%s\n", record_json); }

udf_status run_command(const std::string& name, const udf_config* config, const std::string& resume,
                       bool verbose) {
  if (name == "synth") return udf_cmd_synth(config);
  if (name == "train") {
    return udf_cmd_train(config, resume.empty() ? nullptr : resume.c_str(), verbose ? print_record : nullptr,
                         nullptr);
  }
  if (name == "extract") {
    char* summary = nullptr;
    const udf_status s = udf_cmd_extract(config, &summary);
    StringPtr guard(summary);
    if (s == UDF_OK && verbose) std::fprintf(stderr, "%s\n", summary);
    return s;
  }
  if (name == "deform") {
    char* summary = nullptr;
    const udf_status s = udf_cmd_deform(config, &summary);
    StringPtr guard(summary);
    if (s == UDF_OK && verbose) std::fprintf(stderr, "%s\n", summary);
    return s;
  }
  if (name == "eval") {
    char* table = nullptr;
    const udf_status s = udf_cmd_eval(config, nullptr, &table);
    StringPtr guard(table);
    if (s == UDF_OK) std::fputs(table, stdout);
    return s;
  }
  return udf_cmd_export_field(config);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learn unsigned distance fields from surfel clouds and extract open surfaces"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(udf_version()));

  CommonOptions common;
  std::string resume;
  std::vector<std::function<void(std::vector<Override>&)>> collectors;

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic surfel scene");
  add_common(synth, common);
  add_mapped<std::string>(synth, collectors, "--kind", "synth.kind", "Scene kind");
  add_mapped<long long>(synth, collectors, "--n", "synth.n", "Number of surfels");
  add_mapped<double>(synth, collectors, "--noise", "synth.noise", "Gaussian noise on centers");

  CLI::App* train = app.add_subcommand("train", "Fit a field to a surfel cloud");
  add_common(train, common);
  add_mapped<std::string>(train, collectors, "--cloud", "paths.cloud", "Input surfel cloud");
  add_mapped<long long>(train, collectors, "--iters", "train.total_iters", "Total iterations");
  train->add_option("--resume", resume, "Field file to resume from")->check(CLI::ExistingFile);

  CLI::App* extract = app.add_subcommand("extract", "Extract a mesh and its boundary loops");
  add_common(extract, common);
  add_mapped<std::string>(extract, collectors, "--checkpoint", "paths.checkpoint", "Field file");
  add_mapped<long long>(extract, collectors, "--res", "grid.resolution", "Grid resolution");
  add_mapped<double>(extract, collectors, "--iso-band", "grid.iso_band", "Crossing band");

  CLI::App* deform = app.add_subcommand("deform", "Pull points onto the surface step by step");
  add_common(deform, common);
  add_mapped<std::string>(deform, collectors, "--checkpoint", "paths.checkpoint", "Field file");
  add_mapped<std::string>(deform, collectors, "--points", "paths.points", "Input xyz points");
  add_mapped<long long>(deform, collectors, "--steps", "deform.steps", "Number of steps");
  add_mapped<double>(deform, collectors, "--fraction", "deform.step_fraction", "Step fraction");

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a field against ground truth");
  add_common(eval, common);
  add_mapped<std::string>(eval, collectors, "--checkpoint", "paths.checkpoint", "Field file");
  add_mapped<std::string>(eval, collectors, "--gt", "paths.gt", "Ground-truth surface points");
  add_mapped<std::string>(eval, collectors, "--oracle", "paths.oracle", "Oracle field file");
  add_mapped<long long>(eval, collectors, "--res", "eval.resolution", "Band error grid resolution");

  CLI::App* exportf = app.add_subcommand("export-field", "Write the field on a grid");
  add_common(exportf, common);
  add_mapped<std::string>(exportf, collectors, "--checkpoint", "paths.checkpoint", "Field file");
  add_mapped<long long>(exportf, collectors, "--res", "grid.resolution", "Grid resolution");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  ConfigPtr config;
  try {
    std::vector<Override> flags;
    for (const auto& c : collectors) c(flags);
    config = build_config(common, flags);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "udfforge %s: %s\n", name.c_str(), e.what());
    return kExitUsage;
  }

  const udf_status s = run_command(name, config.get(), resume, common.verbose);
  if (s == UDF_OK) return kExitOk;
  std::fprintf(stderr, "udfforge %s: %s\n", name.c_str(), udf_last_error());
  return s == UDF_ERR_CONFIG || s == UDF_ERR_INVALID_ARGUMENT ? kExitUsage : kExitRuntime;
}
