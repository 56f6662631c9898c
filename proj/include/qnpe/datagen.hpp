// Deterministic synthetic datasets for embedding experiments: a rolled 2-D
// sheet, a planted rank-2 plane, two margin-separated clusters, and an
// S-shaped sheet. Same seed, same bytes.
#pragma once

#include <string>

#include "qnpe/data_matrix.hpp"

namespace qnpe {

enum class DatasetKind { SwissRoll, Plane, Clusters, SCurve };

// Accepts the CLI spellings "swiss-roll", "plane", "clusters", "s-curve".
DatasetKind dataset_kind_from(const std::string& name);
std::string to_string(DatasetKind kind);

// m points with n features. Geometry per kind:
//  - swiss-roll: (t cos t, h, t sin t)/5, t in [1.5pi, 4.5pi], h in [0, 10];
//  - plane: rank-2 sheet, uniform square times a seeded orthonormal 2 x n map;
//  - clusters: two balls of radius <= 0.28 with centers 10 apart, so the
//    pair distances keep a 20% margin around radius 1;
//  - s-curve: (sin t, h, sign(t)(cos t - 1)), t in [-1.5pi, 1.5pi], h in [0, 2].
// Extra feature columns are zero before noise. noise adds iid Gaussian jitter
// of that standard deviation to every entry.
DataMatrix generate_dataset(DatasetKind kind, Eigen::Index m, Eigen::Index n, double noise,
                            uint64_t seed);

}  // namespace qnpe
