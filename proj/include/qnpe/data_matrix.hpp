// Dense real data matrices with row-norm metadata, CSV ingestion and
// square zero-padding so index registers can use whole qubit ranges.
#pragma once

#include <Eigen/Dense>
#include <string>

#include "qnpe/common.hpp"

namespace qnpe {

struct PadSpec {
    Eigen::Index orig_rows = 0;
    Eigen::Index orig_cols = 0;
    bool padded = false;
};

struct DataMatrix {
    Eigen::MatrixXd entries;       // rows = points, cols = features
    Eigen::VectorXd row_norms;     // Euclidean norm per row
    double frobenius_norm = 0.0;
    double max_row_norm = 0.0;     // the h bound used by oracle cost models
    PadSpec pad;
    std::string provenance;        // file path or generator tag

    Eigen::Index rows() const { return entries.rows(); }
    Eigen::Index cols() const { return entries.cols(); }
};

// Wraps a dense matrix, computing norms; rejects empty or non-finite input.
DataMatrix make_data_matrix(Eigen::MatrixXd entries, std::string provenance = "inline");

// Reads a comma-separated UTF-8 file into a DataMatrix. Every record must
// have the same field count; `skip_header` drops the first line.
DataMatrix ingest_csv(const std::string& path, bool skip_header = false);

// Zero-pads to the next power-of-two square shape (rows and columns), so a
// log2-sized index register addresses the matrix exactly. Records the
// original shape; idempotent on already padded square matrices.
DataMatrix pad_square(const DataMatrix& in);

// Writes the matrix as CSV with round-trip-exact doubles.
void emit_csv(const Eigen::MatrixXd& m, const std::string& path);

// Round-trip-exact double formatting shared by all emitters.
std::string format_double(double v);

}  // namespace qnpe
