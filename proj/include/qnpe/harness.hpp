// Command layer: dataset generation, classical/quantum runs, result
// comparison, and query-scaling studies. Every command writes its artifacts
// plus a manifest listing them, and all JSON artifacts carry a schema tag
// validated against the versioned schemas shipped in schemas/.
#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qnpe/pipeline.hpp"

namespace qnpe {

struct HarnessOptions {
    // gen: dataset is a kind name; run: dataset is a CSV path.
    std::string dataset = "plane";
    std::string mode = "quantum";  // classical | quantum
    std::string tier = "spectral";
    Eigen::Index m = 8;
    Eigen::Index n = 2;
    double noise = 0.0;
    double r = 1.0;
    Eigen::Index k = 0;  // > 0 selects the nearest-neighbor rule (classical mode)
    Eigen::Index d = 2;
    std::optional<double> alpha;
    double eps = 0.05;
    uint64_t seed = 1;
    std::string out_dir = ".";
    bool dump_states = false;
    bool header = false;  // gen: write a header row; run: input has one
    // compare inputs: the two run output directories.
    std::string compare_a;
    std::string compare_b;
    // scaling inputs.
    std::string axis = "m";
    std::vector<Eigen::Index> sizes;
};

// Each command returns a process exit status: 0 on success, 2 on a
// structured failure (serialized as one JSON object on `err`). Usage-level
// validation (unknown flags or enum spellings) belongs to the CLI layer,
// which exits 1 before these run.
int cmd_gen(const HarnessOptions& opts, std::ostream& err);
int cmd_run(const HarnessOptions& opts, std::ostream& err);
int cmd_compare(const HarnessOptions& opts, std::ostream& err);
int cmd_scaling(const HarnessOptions& opts, std::ostream& err);

// Versioned schema registry (also shipped as files under schemas/). Names:
// manifest, quantum_result, classical_result, comparison, scaling, stores.
const std::vector<std::string>& schema_names();
nlohmann::json schema_json(const std::string& name);

// Validates `doc` against the subset of JSON Schema the registry uses
// (type / required / properties / items); throws a format error on mismatch.
void validate_against_schema(const nlohmann::json& doc, const nlohmann::json& schema);

nlohmann::json load_json(const std::string& path);

// Least-squares slope of log(query count) against log(size).
double fit_log_exponent(const std::vector<double>& sizes, const std::vector<double>& queries);

}  // namespace qnpe
