// Command layer implementation: artifact writers, the versioned schema
// registry, run manifests with content fingerprints, result comparison, and
// query-scaling measurements on deterministic ring datasets.
#include "qnpe/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qnpe/datagen.hpp"

namespace qnpe {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Schema registry. The embedded definitions are the source of truth; the
// files under schemas/ are generated from them and checked for equality in
// the test suite. Version tags live in the document "schema" field and in
// the shipped file names.

const json& registry() {
    static const json reg = json::parse(R"JSON({
  "manifest": {
    "type": "object",
    "required": ["schema", "command", "config", "dataset_fingerprint", "outputs", "wall_time_sec"],
    "properties": {
      "schema": {"type": "string"},
      "command": {"type": "string"},
      "config": {"type": "object"},
      "dataset_fingerprint": {"type": "string"},
      "outputs": {"type": "array", "items": {"type": "string"}},
      "wall_time_sec": {"type": "number"}
    }
  },
  "quantum_result": {
    "type": "object",
    "required": ["schema", "config", "k_estimate", "neighbor_sets", "sigma_list",
                 "w_csv", "a_csv", "query_ledger", "error_report"],
    "properties": {
      "schema": {"type": "string"},
      "config": {
        "type": "object",
        "required": ["r", "d", "alpha", "eps", "eps0", "eps1", "delta_prime", "t_bits", "tier", "seed"],
        "properties": {
          "r": {"type": "number"},
          "d": {"type": "integer"},
          "alpha": {"type": ["number", "null"]},
          "eps": {"type": "number"},
          "eps0": {"type": "number"},
          "eps1": {"type": "number"},
          "delta_prime": {"type": "number"},
          "t_bits": {"type": "object"},
          "tier": {"type": "string"},
          "seed": {"type": "integer"}
        }
      },
      "k_estimate": {"type": "number"},
      "neighbor_sets": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}},
      "sigma_list": {"type": "array", "items": {"type": "number"}},
      "w_csv": {"type": "string"},
      "a_csv": {"type": "string"},
      "query_ledger": {
        "type": "object",
        "required": ["stages", "details", "total"],
        "properties": {
          "stages": {"type": "object"},
          "details": {"type": "object"},
          "total": {"type": "integer"}
        }
      },
      "error_report": {
        "type": "object",
        "required": ["measured", "bounds", "warnings"],
        "properties": {
          "measured": {"type": "object"},
          "bounds": {"type": "object"},
          "warnings": {"type": "array", "items": {"type": "string"}}
        }
      }
    }
  },
  "classical_result": {
    "type": "object",
    "required": ["schema", "params", "alpha_used", "neighbor_sets", "sigma_list",
                 "embedding_objective", "fit_residuals", "reconstruction_residual",
                 "w_csv", "a_csv", "cost_model"],
    "properties": {
      "schema": {"type": "string"},
      "params": {
        "type": "object",
        "required": ["rule", "r", "k", "d", "alpha"],
        "properties": {
          "rule": {"type": "string"},
          "r": {"type": "number"},
          "k": {"type": "integer"},
          "d": {"type": "integer"},
          "alpha": {"type": ["number", "null"]}
        }
      },
      "alpha_used": {"type": "number"},
      "neighbor_sets": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}},
      "sigma_list": {"type": "array", "items": {"type": "number"}},
      "embedding_objective": {"type": "number"},
      "fit_residuals": {"type": "array", "items": {"type": "number"}},
      "reconstruction_residual": {"type": "number"},
      "w_csv": {"type": "string"},
      "a_csv": {"type": "string"},
      "cost_model": {"type": "number"}
    }
  },
  "comparison": {
    "type": "object",
    "required": ["schema", "dataset_fingerprint", "jaccard", "jaccard_mean",
                 "delta_w_fro", "sigma_deviation", "principal_angles_deg"],
    "properties": {
      "schema": {"type": "string"},
      "dataset_fingerprint": {"type": "string"},
      "jaccard": {"type": "array", "items": {"type": "number"}},
      "jaccard_mean": {"type": "number"},
      "delta_w_fro": {"type": "number"},
      "sigma_deviation": {"type": "number"},
      "principal_angles_deg": {"type": "array", "items": {"type": "number"}}
    }
  },
  "scaling": {
    "type": "object",
    "required": ["schema", "axis", "points", "fitted_exponent", "reference_exponent", "csv"],
    "properties": {
      "schema": {"type": "string"},
      "axis": {"type": "string"},
      "points": {
        "type": "array",
        "items": {
          "type": "object",
          "required": ["size", "queries"],
          "properties": {
            "size": {"type": "integer"},
            "queries": {
              "type": "object",
              "required": ["neighbors", "weights", "transform"],
              "properties": {
                "neighbors": {"type": "integer"},
                "weights": {"type": "integer"},
                "transform": {"type": "integer"}
              }
            }
          }
        }
      },
      "fitted_exponent": {
        "type": "object",
        "required": ["neighbors", "weights", "transform"],
        "properties": {
          "neighbors": {"type": "number"},
          "weights": {"type": "number"},
          "transform": {"type": "number"}
        }
      },
      "reference_exponent": {
        "type": "object",
        "required": ["neighbors", "weights", "transform"],
        "properties": {
          "neighbors": {"type": "number"},
          "weights": {"type": "number"},
          "transform": {"type": "number"}
        }
      },
      "csv": {"type": "string"}
    }
  },
  "stores": {
    "type": "object",
    "required": ["schema", "data", "neighbor_indicator", "shifted_weight"],
    "properties": {
      "schema": {"type": "string"},
      "data": {"type": "object"},
      "neighbor_indicator": {"type": "object"},
      "shifted_weight": {"type": "object"}
    }
  }
})JSON");
    return reg;
}

// ---------------------------------------------------------------------------
// Small shared helpers.

class Timer {
public:
    Timer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        auto now = std::chrono::steady_clock::now();
        return std::chrono::duration<double>(now - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

Tier tier_from(const std::string& name) {
    if (name == "circuit") return Tier::Circuit;
    if (name == "spectral") return Tier::Spectral;
    throw Error(ErrKind::Value, "unknown tier '" + name + "': expected circuit or spectral");
}

std::string join_path(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrKind::Io, "cannot create output directory '" + dir + "': " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrKind::Io, "cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw Error(ErrKind::Io, "failed while writing '" + path + "'");
}

// Writes one matrix as CSV with the shortest round-trip double format; an
// optional header row labels columns f0..f{n-1}.
void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m, bool header) {
    std::ostringstream os;
    if (header) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) os << (c ? "," : "") << "f" << c;
        os << "\n";
    }
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c) os << ",";
            os << format_double(m(r, c));
        }
        os << "\n";
    }
    write_text(path, os.str());
}

void write_json_doc(const std::string& path, const json& doc, const std::string& schema_name) {
    validate_against_schema(doc, schema_json(schema_name));
    write_text(path, doc.dump(2) + "\n");
}

json vector_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

json sets_json(const std::vector<std::vector<Eigen::Index>>& sets) {
    json out = json::array();
    for (const auto& s : sets) {
        json row = json::array();
        for (Eigen::Index j : s) row.push_back(int64_t(j));
        out.push_back(std::move(row));
    }
    return out;
}

json config_json(const QnpeConfig& cfg) {
    json t_bits = json::object();
    for (const auto& [name, bits] : cfg.t_bits) t_bits[name] = bits;
    return json{{"r", cfg.r},
                {"d", int64_t(cfg.d)},
                {"alpha", cfg.alpha ? json(*cfg.alpha) : json()},
                {"eps", cfg.eps},
                {"eps0", cfg.eps0},
                {"eps1", cfg.eps1},
                {"delta_prime", cfg.delta_prime},
                {"t_bits", std::move(t_bits)},
                {"tier", std::string(to_string(cfg.tier))},
                {"seed", cfg.seed}};
}

json ledger_json(const StageLedger& ledger) {
    json stages = json::object();
    for (const auto& [name, q] : ledger.stages) stages[name] = q;
    json details = json::object();
    for (const auto& [name, q] : ledger.details) details[name] = q;
    return json{{"stages", std::move(stages)}, {"details", std::move(details)}, {"total", ledger.total()}};
}

json report_json(const ErrorReport& report) {
    json measured = json::object();
    for (const auto& [name, v] : report.measured) measured[name] = v;
    json bounds = json::object();
    for (const auto& [name, v] : report.bounds) bounds[name] = v;
    return json{{"measured", std::move(measured)},
                {"bounds", std::move(bounds)},
                {"warnings", report.warnings}};
}

// The manifest indexes a command's artifacts: it lists every output file
// (which must exist and be non-empty) next to the command, its configuration,
// and the content fingerprint of the dataset it consumed. Determinism checks
// hash the listed outputs, so the wall time lives only here, in the index.
void write_manifest(const std::string& out_dir, const std::string& command, json config,
                    const std::string& fingerprint, const std::vector<std::string>& outputs,
                    double wall_time_sec) {
    for (const auto& name : outputs) {
        const std::string path = join_path(out_dir, name);
        std::error_code ec;
        const auto size = fs::file_size(path, ec);
        if (ec || size == 0) {
            throw Error(ErrKind::Internal, "output file '" + path + "' is missing or empty");
        }
    }
    json doc{{"schema", "manifest/v1"},
             {"command", command},
             {"config", std::move(config)},
             {"dataset_fingerprint", fingerprint},
             {"outputs", outputs},
             {"wall_time_sec", wall_time_sec}};
    write_json_doc(join_path(out_dir, "manifest.json"), doc, "manifest");
}

// Shared exit-status contract: success is 0; any structured failure is
// serialized as a single JSON object on the error stream and becomes 2.
template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        fn();
        return 0;
    } catch (const Error& e) {
        json detail{{"kind", std::string(to_string(e.kind()))}, {"message", e.what()}};
        if (e.step()) detail["step"] = *e.step();
        err << json{{"error", std::move(detail)}}.dump() << "\n";
        return 2;
    } catch (const std::exception& e) {
        json detail{{"kind", "internal_error"}, {"message", e.what()}};
        err << json{{"error", std::move(detail)}}.dump() << "\n";
        return 2;
    }
}

std::string file_fingerprint(const std::string& path) { return hex64(fnv1a64_file(path)); }

// ---------------------------------------------------------------------------
// Run-command helpers.

json classical_result_json(const ClassicalResult& res, const ClassicalParams& params) {
    Eigen::VectorXd sigma(res.spectral.z_eigenvalues.size());
    for (Eigen::Index j = 0; j < sigma.size(); ++j) {
        sigma[j] = std::sqrt(std::max(0.0, res.spectral.z_eigenvalues[j]));
    }
    json params_json{{"rule", params.rule == NeighborRule::Radius ? "radius" : "knn"},
                     {"r", params.r},
                     {"k", int64_t(params.k)},
                     {"d", int64_t(params.d)},
                     {"alpha", params.alpha ? json(*params.alpha) : json()}};
    return json{{"schema", "classical_result/v1"},
                {"params", std::move(params_json)},
                {"alpha_used", res.alpha},
                {"neighbor_sets", sets_json(res.neighbors.sets)},
                {"sigma_list", vector_json(sigma)},
                {"embedding_objective", res.spectral.z_eigenvalues.sum()},
                {"fit_residuals", vector_json(res.embedding.fit_residuals)},
                {"reconstruction_residual", res.weights.reconstruction_residual},
                {"w_csv", "w.csv"},
                {"a_csv", "a.csv"},
                {"cost_model", res.cost_model}};
}

json quantum_result_json(const QnpeResult& res) {
    return json{{"schema", "quantum_result/v1"},
                {"config", config_json(res.config)},
                {"k_estimate", res.k_estimate},
                {"neighbor_sets", sets_json(res.neighbors.sets)},
                {"sigma_list", vector_json(res.sigma_list)},
                {"w_csv", "w.csv"},
                {"a_csv", "a.csv"},
                {"query_ledger", ledger_json(res.query_ledger)},
                {"error_report", report_json(res.error_report)}};
}

// Structural summaries of the three stores a quantum run builds, regenerated
// from the run's inputs and outputs (query counters start at zero here; the
// per-stage accounting lives in the result's query ledger).
json stores_json_doc(const DataMatrix& data, const QnpeResult& res) {
    Eigen::MatrixXd indicator = Eigen::MatrixXd::Zero(data.rows(), data.rows());
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        for (Eigen::Index j : res.neighbors.sets[size_t(i)]) indicator(i, j) = 1.0;
    }
    Eigen::MatrixXd shifted =
        Eigen::MatrixXd::Identity(data.rows(), data.rows()) - res.w_quantum.w;
    const TreeStore store_x = build_store(data, StoreKind::Data);
    const TreeStore store_b = build_store(indicator, StoreKind::NeighborIndicator, "run");
    const TreeStore store_d = build_store(shifted, StoreKind::ShiftedWeight, "run");
    return json{{"schema", "stores/v1"},
                {"data", json::parse(store_x.dump_json())},
                {"neighbor_indicator", json::parse(store_b.dump_json())},
                {"shifted_weight", json::parse(store_d.dump_json())}};
}

// ---------------------------------------------------------------------------
// Compare-command helpers.

double jaccard(const std::vector<int64_t>& a, const std::vector<int64_t>& b) {
    if (a.empty() && b.empty()) return 1.0;
    std::set<int64_t> sa(a.begin(), a.end());
    std::set<int64_t> sb(b.begin(), b.end());
    size_t inter = 0;
    for (int64_t v : sa) inter += sb.count(v);
    const size_t uni = sa.size() + sb.size() - inter;
    return uni == 0 ? 1.0 : double(inter) / double(uni);
}

struct LoadedRun {
    json manifest;
    json result;
    Eigen::MatrixXd w;
    Eigen::MatrixXd a;
    std::vector<std::vector<int64_t>> sets;
    std::vector<double> sigma;
};

LoadedRun load_run(const std::string& dir) {
    LoadedRun run;
    run.manifest = load_json(join_path(dir, "manifest.json"));
    validate_against_schema(run.manifest, schema_json("manifest"));
    std::string result_name;
    for (const auto& name : run.manifest.at("outputs")) {
        const std::string s = name.get<std::string>();
        if (s == "quantum_result.json" || s == "classical_result.json") result_name = s;
    }
    if (result_name.empty()) {
        throw Error(ErrKind::Comparison, "manifest in '" + dir + "' lists no result document");
    }
    run.result = load_json(join_path(dir, result_name));
    const std::string schema_name =
        result_name == "quantum_result.json" ? "quantum_result" : "classical_result";
    validate_against_schema(run.result, schema_json(schema_name));
    run.w = ingest_csv(join_path(dir, run.result.at("w_csv").get<std::string>())).entries;
    run.a = ingest_csv(join_path(dir, run.result.at("a_csv").get<std::string>())).entries;
    for (const auto& s : run.result.at("neighbor_sets")) {
        run.sets.push_back(s.get<std::vector<int64_t>>());
    }
    run.sigma = run.result.at("sigma_list").get<std::vector<double>>();
    return run;
}

// ---------------------------------------------------------------------------
// Scaling-command machinery. Each measured point is a synthetic dataset whose
// radius rule selects an exact, balanced neighborhood, so the measured query
// counts isolate the declared axis instead of mixing in geometry drift.
//
// Point- and feature-count sweeps use a grid of four-point rectangle clusters
// with an aspect-ratio ladder. The clusters keep three properties constant
// while the axis grows: the correlation condition number stays bounded (the
// neighbor chords never become collinear), the shifted-weight spectral gap
// stays near one (each cluster is its own block, so small singular values
// never sink below the zero threshold), and the bottom singular direction is
// a corner-parity pattern whose overlap with the coordinate columns is
// structural rather than accidental, which keeps the ridge post-selection
// probability well away from zero. Dimension and neighbor-count sweeps use a
// ring, whose harmonics supply as many distinct singular values as needed.

constexpr double kScalingPi = 3.14159265358979323846;

// Ring of m points with unit nominal spacing; radial_jitter > 0 perturbs
// radii (deterministically) so the shifted-weight spectrum is simple, which
// keeps minimum-finding calls one-per-direction in dimension sweeps.
Eigen::MatrixXd ring_points(Eigen::Index m, double radial_jitter, uint64_t seed) {
    const double big_r = 1.0 / (2.0 * std::sin(kScalingPi / double(m)));
    Rng rng(derive_seed(seed, "scaling-ring", uint64_t(m)));
    Eigen::MatrixXd pts(m, 2);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double theta = 2.0 * kScalingPi * double(i) / double(m);
        const double rad = big_r + radial_jitter * (2.0 * rng.uniform() - 1.0);
        pts(i, 0) = rad * std::cos(theta);
        pts(i, 1) = rad * std::sin(theta);
    }
    return pts;
}

// m/4 rectangle clusters (unit height, widths laddered over [1.6, 1.95]) on
// a centered grid with spacing 6; radius 2.2 captures exactly the three
// within-cluster neighbors of every point.
Eigen::MatrixXd rectangle_grid(Eigen::Index m, uint64_t seed) {
    if (m % 4 != 0 || m < 8) {
        throw Error(ErrKind::Parameter,
                    "cluster-grid sizes must be multiples of four (and at least eight)");
    }
    const Eigen::Index clusters = m / 4;
    const Eigen::Index gcols = Eigen::Index(std::ceil(std::sqrt(double(clusters))));
    Rng rng(derive_seed(seed, "scaling-grid", uint64_t(m)));
    Eigen::MatrixXd pts(m, 2);
    for (Eigen::Index t = 0; t < clusters; ++t) {
        const double wid =
            1.6 + 0.35 * (clusters == 1 ? 0.0 : double(t) / double(clusters - 1));
        const double base_x = 6.0 * double(t % gcols);
        const double base_y = 6.0 * double(t / gcols);
        const double corner[4][2] = {{0.0, 0.0}, {wid, 0.0}, {0.0, 1.0}, {wid, 1.0}};
        for (int v = 0; v < 4; ++v) {
            pts(4 * t + v, 0) = base_x + corner[v][0] + 0.02 * (2.0 * rng.uniform() - 1.0);
            pts(4 * t + v, 1) = base_y + corner[v][1] + 0.02 * (2.0 * rng.uniform() - 1.0);
        }
    }
    pts.rowwise() -= pts.colwise().mean();
    return pts;
}

// Distance from a point to its j-th ring neighbor, in units of the spacing.
double ring_neighbor_distance(Eigen::Index m, Eigen::Index j) {
    return std::sin(kScalingPi * double(j) / double(m)) / std::sin(kScalingPi / double(m));
}

// Embeds 2-d points into n ambient dimensions through orthonormal rows
// (distance preserving), so the ambient dimension is swept in isolation.
Eigen::MatrixXd embed_columns(const Eigen::MatrixXd& pts, Eigen::Index n, uint64_t seed) {
    if (n == 2) return pts;
    Rng rng(derive_seed(seed, "scaling-embed", uint64_t(n)));
    Eigen::MatrixXd g(n, 2);
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < 2; ++c) {
            const double u1 = std::max(rng.uniform(), 1e-300);
            const double u2 = rng.uniform();
            g(r, c) = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kScalingPi * u2);
        }
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, 2);
    return pts * q.transpose();
}

struct ScalingPoint {
    Eigen::Index size = 0;
    uint64_t neighbors = 0;
    uint64_t weights = 0;
    uint64_t transform = 0;
};

struct ScalingCase {
    DataMatrix data;
    double r = 0.0;
    Eigen::Index d = 1;
};

ScalingCase scaling_case(const std::string& axis, Eigen::Index size, const HarnessOptions& opts) {
    ScalingCase c;
    if (axis == "m") {
        c.data = make_data_matrix(rectangle_grid(size, opts.seed), "scaling-grid");
        c.r = 2.2;
    } else if (axis == "n") {
        c.data = make_data_matrix(embed_columns(rectangle_grid(8, opts.seed), size, opts.seed),
                                  "scaling-grid");
        c.r = 2.2;
    } else if (axis == "d") {
        c.data = make_data_matrix(ring_points(8, 0.08, opts.seed), "scaling-ring");
        c.r = 1.4;
        c.d = size;
    } else if (axis == "k") {
        if (size % 2 != 0) {
            throw Error(ErrKind::Parameter,
                        "axis k sizes must be even: ring neighborhoods grow in symmetric pairs");
        }
        const Eigen::Index m = 16;
        if (size + 2 > m) {
            throw Error(ErrKind::Parameter, "axis k sizes must stay below the ring size 16");
        }
        // Mild radial jitter keeps the spectrum simple and the recovered
        // direction coupled to the coordinate columns; the midpoint radius
        // still separates the wanted neighbor shell from the next one.
        c.data = make_data_matrix(ring_points(m, 0.04, opts.seed), "scaling-ring");
        c.r = 0.5 * (ring_neighbor_distance(m, size / 2) + ring_neighbor_distance(m, size / 2 + 1));
    } else {
        throw Error(ErrKind::Value, "unknown scaling axis '" + axis + "': expected m, n, k, or d");
    }
    return c;
}

// Runs the three pipeline stages on one scaling case and meters each stage's
// oracle queries. Stages two and three consume the exact radius neighborhoods
// and the stage-two weight matrix, so each count reflects its own stage.
ScalingPoint measure_point(const std::string& axis, Eigen::Index size,
                           const HarnessOptions& opts) {
    const ScalingCase c = scaling_case(axis, size, opts);
    QnpeConfig cfg;
    cfg.r = c.r;
    cfg.d = c.d;
    cfg.alpha = opts.alpha;
    cfg.eps = opts.eps;
    cfg.tier = tier_from(opts.tier);
    cfg.seed = derive_seed(opts.seed, "scaling-point", uint64_t(size));
    cfg.validate();

    ScalingPoint point;
    point.size = size;

    const TreeStore store_x = build_store(c.data, StoreKind::Data);
    const NeighborFindResult found = find_neighbors_quantum(c.data, store_x, cfg);
    point.neighbors = found.queries;

    const NeighborSets sets = radius_neighbors(c.data, c.r);
    Eigen::MatrixXd indicator = Eigen::MatrixXd::Zero(c.data.rows(), c.data.rows());
    for (Eigen::Index i = 0; i < c.data.rows(); ++i) {
        for (Eigen::Index j : sets.sets[size_t(i)]) indicator(i, j) = 1.0;
    }
    const TreeStore store_b = build_store(indicator, StoreKind::NeighborIndicator, "scaling");
    StageLedger ledger;
    const WeightMatrix weights = weight_matrix_quantum(c.data, store_x, store_b, cfg, &ledger);
    point.weights = ledger.stages.at("weights");

    const Eigen::MatrixXd shifted =
        Eigen::MatrixXd::Identity(c.data.rows(), c.data.rows()) - weights.w;
    const TreeStore store_d = build_store(shifted, StoreKind::ShiftedWeight, "scaling");
    const TransformResult transform = transformation_quantum(store_d, store_x, c.data, cfg);
    point.transform = transform.queries;
    return point;
}

std::map<std::string, double> reference_exponents(const std::string& axis) {
    if (axis == "m") return {{"neighbors", 1.5}, {"weights", 1.0}, {"transform", 1.0}};
    if (axis == "n") return {{"neighbors", 0.0}, {"weights", 0.0}, {"transform", 0.0}};
    if (axis == "d") return {{"neighbors", 0.0}, {"weights", 0.0}, {"transform", 1.0}};
    return {{"neighbors", 0.5}, {"weights", 1.0}, {"transform", 0.0}};
}

std::vector<Eigen::Index> default_sizes(const std::string& axis) {
    if (axis == "m") return {8, 16, 32, 64};
    if (axis == "n") return {4, 8, 16, 32};
    if (axis == "d") return {1, 2, 3, 4};
    return {2, 4, 6, 8};
}

}  // namespace

// ---------------------------------------------------------------------------
// Registry accessors and the schema validator subset.

const std::vector<std::string>& schema_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& [name, schema] : registry().items()) out.push_back(name);
        std::sort(out.begin(), out.end());
        return out;
    }();
    return names;
}

nlohmann::json schema_json(const std::string& name) {
    const auto& reg = registry();
    auto it = reg.find(name);
    if (it == reg.end()) throw Error(ErrKind::Value, "unknown schema '" + name + "'");
    return *it;
}

namespace {

bool type_matches(const json& doc, const std::string& t) {
    if (t == "object") return doc.is_object();
    if (t == "array") return doc.is_array();
    if (t == "string") return doc.is_string();
    if (t == "integer") return doc.is_number_integer() || doc.is_number_unsigned();
    if (t == "number") return doc.is_number();
    if (t == "boolean") return doc.is_boolean();
    if (t == "null") return doc.is_null();
    throw Error(ErrKind::Value, "schema names unsupported type '" + t + "'");
}

void validate_node(const json& doc, const json& schema, const std::string& path) {
    if (schema.contains("type")) {
        const json& t = schema.at("type");
        bool ok = false;
        if (t.is_string()) {
            ok = type_matches(doc, t.get<std::string>());
        } else {
            for (const auto& alt : t) ok = ok || type_matches(doc, alt.get<std::string>());
        }
        if (!ok) {
            throw Error(ErrKind::Format,
                        path + ": expected type " + t.dump() + ", got " + doc.type_name());
        }
    }
    if (doc.is_object()) {
        if (schema.contains("required")) {
            for (const auto& req : schema.at("required")) {
                const std::string name = req.get<std::string>();
                if (!doc.contains(name)) {
                    throw Error(ErrKind::Format, path + ": missing required field '" + name + "'");
                }
            }
        }
        if (schema.contains("properties")) {
            for (const auto& [name, sub] : schema.at("properties").items()) {
                if (doc.contains(name)) validate_node(doc.at(name), sub, path + "." + name);
            }
        }
    }
    if (doc.is_array() && schema.contains("items")) {
        for (size_t i = 0; i < doc.size(); ++i) {
            validate_node(doc[i], schema.at("items"), path + "[" + std::to_string(i) + "]");
        }
    }
}

}  // namespace

void validate_against_schema(const nlohmann::json& doc, const nlohmann::json& schema) {
    validate_node(doc, schema, "$");
}

nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrKind::Io, "cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrKind::Format, "invalid JSON in '" + path + "': " + e.what());
    }
}

double fit_log_exponent(const std::vector<double>& sizes, const std::vector<double>& queries) {
    if (sizes.size() != queries.size() || sizes.size() < 2) {
        throw Error(ErrKind::Value, "scaling fit needs at least two matched points");
    }
    std::vector<double> lx(sizes.size()), ly(sizes.size());
    for (size_t i = 0; i < sizes.size(); ++i) {
        if (!(sizes[i] > 0.0) || !(queries[i] > 0.0)) {
            throw Error(ErrKind::Value, "scaling fit needs positive sizes and query counts");
        }
        lx[i] = std::log(sizes[i]);
        ly[i] = std::log(queries[i]);
    }
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / double(lx.size());
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / double(ly.size());
    double sxx = 0.0;
    double sxy = 0.0;
    for (size_t i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if (sxx <= 0.0) throw Error(ErrKind::Value, "scaling fit needs at least two distinct sizes");
    return sxy / sxx;
}

// ---------------------------------------------------------------------------
// Commands.

int cmd_gen(const HarnessOptions& opts, std::ostream& err) {
    return guarded(err, [&] {
        Timer timer;
        const DatasetKind kind = dataset_kind_from(opts.dataset);
        const DataMatrix data = generate_dataset(kind, opts.m, opts.n, opts.noise, opts.seed);
        ensure_dir(opts.out_dir);
        const std::string csv_path = join_path(opts.out_dir, "dataset.csv");
        write_matrix_csv(csv_path, data.entries, opts.header);
        json config{{"dataset", std::string(to_string(kind))},
                    {"m", int64_t(opts.m)},
                    {"n", int64_t(opts.n)},
                    {"noise", opts.noise},
                    {"seed", opts.seed},
                    {"header", opts.header}};
        write_manifest(opts.out_dir, "gen", std::move(config), file_fingerprint(csv_path),
                       {"dataset.csv"}, timer.seconds());
    });
}

int cmd_run(const HarnessOptions& opts, std::ostream& err) {
    return guarded(err, [&] {
        Timer timer;
        const DataMatrix data = ingest_csv(opts.dataset, opts.header);
        ensure_dir(opts.out_dir);
        std::vector<std::string> outputs;
        json result_config;
        if (opts.mode == "classical") {
            ClassicalParams params;
            params.rule = opts.k > 0 ? NeighborRule::Knn : NeighborRule::Radius;
            params.r = opts.r;
            if (opts.k > 0) params.k = opts.k;
            params.d = opts.d;
            params.alpha = opts.alpha;
            const ClassicalResult res = run_classical_npe(data, params);
            write_matrix_csv(join_path(opts.out_dir, "w.csv"), res.weights.w, false);
            write_matrix_csv(join_path(opts.out_dir, "a.csv"), res.embedding.a, false);
            const json doc = classical_result_json(res, params);
            write_json_doc(join_path(opts.out_dir, "classical_result.json"), doc, "classical_result");
            outputs = {"classical_result.json", "w.csv", "a.csv"};
            result_config = doc.at("params");
        } else if (opts.mode == "quantum") {
            if (opts.k > 0) {
                throw Error(ErrKind::Parameter,
                            "the nearest-neighbor rule is classical-only; quantum runs select "
                            "neighbors by radius");
            }
            QnpeConfig cfg;
            cfg.r = opts.r;
            cfg.d = opts.d;
            cfg.alpha = opts.alpha;
            cfg.eps = opts.eps;
            cfg.tier = tier_from(opts.tier);
            cfg.seed = opts.seed;
            cfg.validate();
            const QnpeResult res = run_quantum_npe(data, cfg);
            write_matrix_csv(join_path(opts.out_dir, "w.csv"), res.w_quantum.w, false);
            write_matrix_csv(join_path(opts.out_dir, "a.csv"), res.a_states, false);
            const json doc = quantum_result_json(res);
            write_json_doc(join_path(opts.out_dir, "quantum_result.json"), doc, "quantum_result");
            outputs = {"quantum_result.json", "w.csv", "a.csv"};
            if (opts.dump_states) {
                write_json_doc(join_path(opts.out_dir, "stores.json"), stores_json_doc(data, res),
                               "stores");
                outputs.push_back("stores.json");
            }
            result_config = doc.at("config");
        } else {
            throw Error(ErrKind::Value, "unknown mode '" + opts.mode + "': expected classical or quantum");
        }
        json config{{"dataset", opts.dataset},
                    {"mode", opts.mode},
                    {"header", opts.header},
                    {"params", std::move(result_config)}};
        write_manifest(opts.out_dir, "run", std::move(config), file_fingerprint(opts.dataset),
                       outputs, timer.seconds());
    });
}

int cmd_compare(const HarnessOptions& opts, std::ostream& err) {
    return guarded(err, [&] {
        Timer timer;
        if (opts.compare_a.empty() || opts.compare_b.empty()) {
            throw Error(ErrKind::Parameter, "compare needs two run directories (--a and --b)");
        }
        const LoadedRun ra = load_run(opts.compare_a);
        const LoadedRun rb = load_run(opts.compare_b);
        const std::string fa = ra.manifest.at("dataset_fingerprint").get<std::string>();
        const std::string fb = rb.manifest.at("dataset_fingerprint").get<std::string>();
        if (fa != fb) {
            throw Error(ErrKind::Comparison,
                        "runs consumed different datasets (fingerprint " + fa + " vs " + fb + ")");
        }
        if (ra.sets.size() != rb.sets.size() || ra.w.rows() != rb.w.rows() ||
            ra.w.cols() != rb.w.cols() || ra.a.rows() != rb.a.rows()) {
            throw Error(ErrKind::Comparison, "runs have mismatched shapes and cannot be compared");
        }
        json jac = json::array();
        double jac_sum = 0.0;
        for (size_t i = 0; i < ra.sets.size(); ++i) {
            const double v = jaccard(ra.sets[i], rb.sets[i]);
            jac.push_back(v);
            jac_sum += v;
        }
        const double jac_mean = ra.sets.empty() ? 1.0 : jac_sum / double(ra.sets.size());
        const double delta_w = (ra.w - rb.w).norm();
        double sigma_dev = 0.0;
        const size_t common = std::min(ra.sigma.size(), rb.sigma.size());
        for (size_t j = 0; j < common; ++j) {
            sigma_dev = std::max(sigma_dev, std::abs(ra.sigma[j] - rb.sigma[j]));
        }
        const Eigen::VectorXd angles = principal_angles(ra.a, rb.a);
        json angles_deg = json::array();
        for (Eigen::Index j = 0; j < angles.size(); ++j) {
            angles_deg.push_back(angles[j] * 180.0 / kScalingPi);
        }
        ensure_dir(opts.out_dir);
        json doc{{"schema", "comparison/v1"},
                 {"dataset_fingerprint", fa},
                 {"jaccard", std::move(jac)},
                 {"jaccard_mean", jac_mean},
                 {"delta_w_fro", delta_w},
                 {"sigma_deviation", sigma_dev},
                 {"principal_angles_deg", std::move(angles_deg)}};
        write_json_doc(join_path(opts.out_dir, "compare.json"), doc, "comparison");
        json config{{"a", opts.compare_a}, {"b", opts.compare_b}};
        write_manifest(opts.out_dir, "compare", std::move(config), fa, {"compare.json"},
                       timer.seconds());
    });
}

int cmd_scaling(const HarnessOptions& opts, std::ostream& err) {
    return guarded(err, [&] {
        Timer timer;
        const std::string axis = opts.axis;
        std::vector<Eigen::Index> sizes = opts.sizes.empty() ? default_sizes(axis) : opts.sizes;
        if (sizes.size() < 4) {
            throw Error(ErrKind::Parameter, "scaling needs at least four sizes along the axis");
        }
        for (size_t i = 1; i < sizes.size(); ++i) {
            if (sizes[i] <= sizes[i - 1]) {
                throw Error(ErrKind::Parameter, "scaling sizes must be strictly increasing");
            }
        }
        std::vector<ScalingPoint> points;
        for (Eigen::Index size : sizes) points.push_back(measure_point(axis, size, opts));

        std::vector<double> xs;
        std::vector<double> q_n;
        std::vector<double> q_w;
        std::vector<double> q_t;
        for (const ScalingPoint& p : points) {
            xs.push_back(double(p.size));
            q_n.push_back(double(p.neighbors));
            q_w.push_back(double(p.weights));
            q_t.push_back(double(p.transform));
        }
        json fitted{{"neighbors", fit_log_exponent(xs, q_n)},
                    {"weights", fit_log_exponent(xs, q_w)},
                    {"transform", fit_log_exponent(xs, q_t)}};
        json reference = json::object();
        for (const auto& [stage, v] : reference_exponents(axis)) reference[stage] = v;

        ensure_dir(opts.out_dir);
        std::ostringstream csv;
        csv << "size,neighbors,weights,transform\n";
        json points_json = json::array();
        for (const ScalingPoint& p : points) {
            csv << p.size << "," << p.neighbors << "," << p.weights << "," << p.transform << "\n";
            points_json.push_back(json{{"size", int64_t(p.size)},
                                       {"queries",
                                        json{{"neighbors", p.neighbors},
                                             {"weights", p.weights},
                                             {"transform", p.transform}}}});
        }
        write_text(join_path(opts.out_dir, "scaling.csv"), csv.str());
        json doc{{"schema", "scaling/v1"},
                 {"axis", axis},
                 {"points", std::move(points_json)},
                 {"fitted_exponent", std::move(fitted)},
                 {"reference_exponent", std::move(reference)},
                 {"csv", "scaling.csv"}};
        write_json_doc(join_path(opts.out_dir, "scaling.json"), doc, "scaling");

        std::ostringstream stamp;
        stamp << "axis=" << axis << ";sizes=";
        for (size_t i = 0; i < sizes.size(); ++i) stamp << (i ? "," : "") << sizes[i];
        stamp << ";eps=" << format_double(opts.eps) << ";tier=" << opts.tier
              << ";seed=" << opts.seed;
        json config{{"axis", axis},
                    {"sizes", json::array()},
                    {"eps", opts.eps},
                    {"tier", opts.tier},
                    {"seed", opts.seed}};
        for (Eigen::Index s : sizes) config["sizes"].push_back(int64_t(s));
        write_manifest(opts.out_dir, "scaling", std::move(config), hex64(fnv1a64(stamp.str())),
                       {"scaling.json", "scaling.csv"}, timer.seconds());
    });
}

}  // namespace qnpe
