#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "unilgl/benchmark.h"
#include "unilgl/bev.h"
#include "unilgl/covis.h"
#include "unilgl/features.h"
#include "unilgl/pose_graph.h"
#include "unilgl/registration.h"

// Run configuration: a flat set of named keys that covers every tunable
// default of the toolkit. Config files hold "key = value" lines; '#' starts a
// comment. Unknown keys are rejected so typos never pass silently.
namespace unilgl {

class RunConfig {
 public:
  // Every key with its default value.
  RunConfig();

  static RunConfig FromFile(const std::filesystem::path& path);
  void Merge(const std::string& text, const std::string& source_name);
  // "key=value".
  void Override(const std::string& assignment);
  void Set(const std::string& key, const std::string& value);

  bool Has(const std::string& key) const { return values_.count(key) > 0; }
  const std::string& Get(const std::string& key) const;
  double GetDouble(const std::string& key) const;
  int GetInt(const std::string& key) const;
  uint64_t GetU64(const std::string& key) const;
  bool GetBool(const std::string& key) const;

  BevConfig bev() const;
  GncConfig gnc() const;
  MatchConfig match() const;
  LocalizeConfig localize() const;
  LossConfig loss() const;
  ReferenceBackendOptions reference_backend() const;
  OptimizeOptions pose_graph() const;
  LabelOptions labels() const;
  BenchmarkSpec benchmark() const;
  PipelineConfig pipeline() const;
  int workers() const { return GetInt("workers"); }

  // Parses every typed view and checks cross-key consistency (for example,
  // the imported backend needs an embeddings path). Throws ConfigError.
  void Validate() const;

  // All keys, sorted, one "key = value" per line.
  std::string Dump() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace unilgl
