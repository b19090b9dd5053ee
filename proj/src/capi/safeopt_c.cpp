/*
 * Copyright 2026 The safeopt Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "safeopt/safeopt.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>
#include <vector>

#include <json.hpp>

#include "safeopt/error.hpp"
#include "safeopt/harness.hpp"
#include "safeopt/projection.hpp"

struct so_config {
  safeopt::ExperimentConfig cfg;
};

namespace {

thread_local std::string g_last_error;

so_status record(so_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

// Runs f and turns every exception into a status.
template <typename F>
so_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return SO_OK;
  } catch (const safeopt::Error& e) {
    return record(static_cast<so_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return record(SO_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return record(SO_INTERNAL, e.what());
  } catch (...) {
    return record(SO_INTERNAL, "unknown exception");
  }
}

void need(const void* p, const char* what) {
  safeopt::require(p != nullptr, safeopt::ErrorCode::InvalidArgument, std::string(what) + " must not be NULL");
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

so_status make_config(const char* experiment, const char* text, so_config** out) {
  return guarded([&] {
    need(experiment, "experiment");
    need(out, "out");
    *out = nullptr;
    const safeopt::ExperimentKind kind = safeopt::parse_experiment(experiment);
    auto* c = new so_config{text ? safeopt::parse_config(text, kind) : safeopt::default_config(kind)};
    *out = c;
  });
}

void set_key(so_config* cfg, const std::string& key, const nlohmann::json& value) {
  nlohmann::json root = nlohmann::json::parse(safeopt::dump_config(cfg->cfg));
  nlohmann::json* node = &root;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    safeopt::require(!part.empty(), safeopt::ErrorCode::ConfigInvalid, "config key '" + key + "': empty path segment");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    node = &(*node)[part];
    safeopt::require(node->is_object() || node->is_null(), safeopt::ErrorCode::ConfigInvalid,
                     "config key '" + key + "': '" + part + "' is not a section");
    start = dot + 1;
  }
  cfg->cfg = safeopt::parse_config(root.dump(), cfg->cfg.kind);
}

}  // namespace

extern "C" {

const char* so_version(void) { return SAFEOPT_VERSION; }

const char* so_last_error(void) { return g_last_error.c_str(); }

const char* so_status_name(so_status status) {
  if (status == SO_OK) return "Ok";
  if (status == SO_INTERNAL) return "Internal";
  if (status >= SO_INVALID_ARGUMENT && status <= SO_SCHEMA_MISMATCH)
    return safeopt::error_code_name(static_cast<safeopt::ErrorCode>(status));
  return "Unknown";
}

so_status so_config_new(const char* experiment, so_config** out) { return make_config(experiment, nullptr, out); }

so_status so_config_parse(const char* experiment, const char* json_text, so_config** out) {
  if (!json_text) return record(SO_INVALID_ARGUMENT, "json_text must not be NULL");
  return make_config(experiment, json_text, out);
}

so_status so_config_load(const char* experiment, const char* path, so_config** out) {
  return guarded([&] {
    need(experiment, "experiment");
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    *out = new so_config{safeopt::load_config(path, safeopt::parse_experiment(experiment))};
  });
}

void so_config_free(so_config* cfg) { delete cfg; }

so_status so_config_set(so_config* cfg, const char* key, const char* json_value) {
  return guarded([&] {
    need(cfg, "cfg");
    need(key, "key");
    need(json_value, "json_value");
    nlohmann::json value;
    try {
      value = nlohmann::json::parse(json_value);
    } catch (const nlohmann::json::parse_error& e) {
      safeopt::fail(safeopt::ErrorCode::ConfigInvalid,
                    std::string("config key '") + key + "': value is not valid JSON: " + e.what());
    }
    set_key(cfg, key, value);
  });
}

so_status so_config_set_seeds(so_config* cfg, const uint64_t* seeds, size_t count) {
  return guarded([&] {
    need(cfg, "cfg");
    if (count > 0) need(seeds, "seeds");
    safeopt::ExperimentConfig next = cfg->cfg;
    next.seeds.assign(seeds, seeds + count);
    next.validate();
    cfg->cfg = std::move(next);
  });
}

so_status so_config_set_output_dir(so_config* cfg, const char* dir) {
  return guarded([&] {
    need(cfg, "cfg");
    need(dir, "dir");
    safeopt::ExperimentConfig next = cfg->cfg;
    next.output_dir = dir;
    next.validate();
    cfg->cfg = std::move(next);
  });
}

so_status so_config_set_steps(so_config* cfg, uint64_t steps) {
  return guarded([&] {
    need(cfg, "cfg");
    safeopt::ExperimentConfig next = cfg->cfg;
    switch (next.kind) {
      case safeopt::ExperimentKind::Qcqp:
        next.qcqp.steps = steps;
        break;
      case safeopt::ExperimentKind::MetaTrain:
        next.meta_train.outer_steps = steps;
        break;
      case safeopt::ExperimentKind::NavTrain:
        next.nav_train.train.iterations = steps;
        break;
    }
    next.validate();
    cfg->cfg = std::move(next);
  });
}

so_status so_config_dump(const so_config* cfg, char** json_out) {
  return guarded([&] {
    need(cfg, "cfg");
    need(json_out, "json_out");
    *json_out = copy_string(safeopt::dump_config(cfg->cfg));
  });
}

so_status so_config_hash(const so_config* cfg, char** hash_out) {
  return guarded([&] {
    need(cfg, "cfg");
    need(hash_out, "hash_out");
    *hash_out = copy_string(safeopt::config_hash(cfg->cfg));
  });
}

void so_string_free(char* s) { std::free(s); }

so_status so_run(const so_config* cfg, char** output_dir) {
  return guarded([&] {
    need(cfg, "cfg");
    const safeopt::RunReport report = safeopt::run_experiment(cfg->cfg);
    if (output_dir) *output_dir = copy_string(report.output_dir);
  });
}

so_status so_aggregate(const char* const* files, size_t count, const char* out_path) {
  return guarded([&] {
    need(out_path, "out_path");
    if (count > 0) need(files, "files");
    std::vector<std::string> paths;
    for (size_t i = 0; i < count; ++i) {
      need(files[i], "files[i]");
      paths.emplace_back(files[i]);
    }
    safeopt::write_aggregate_csv(out_path, safeopt::aggregate(paths));
  });
}

so_status so_project(const double* a, size_t m, size_t n, const double* b, const double* x0, double delta,
                     double* x_out, double* lambda_out) {
  return guarded([&] {
    need(x0, "x0");
    need(x_out, "x_out");
    if (m > 0) {
      need(a, "a");
      need(b, "b");
    }
    safeopt::Matrix am(m, n, std::vector<double>(a, a + m * n));
    const safeopt::ProjectionMetric metric(std::move(am), delta);
    const safeopt::ProjectionResult r =
        safeopt::project(metric, safeopt::Vector(std::vector<double>(x0, x0 + n)), safeopt::Vector(std::vector<double>(b, b + m)));
    for (size_t i = 0; i < n; ++i) x_out[i] = r.x[i];
    if (lambda_out)
      for (size_t i = 0; i < m; ++i) lambda_out[i] = r.lambda[i];
  });
}

}  // extern "C"
