#include "qnpe/data_matrix.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace qnpe {

DataMatrix make_data_matrix(Eigen::MatrixXd entries, std::string provenance) {
    if (entries.rows() == 0 || entries.cols() == 0)
        throw Error(ErrKind::EmptyInput, "data matrix must have at least one row and column");
    if (!entries.allFinite())
        throw Error(ErrKind::Value, "data matrix contains NaN or infinite entries");
    DataMatrix dm;
    dm.entries = std::move(entries);
    dm.row_norms = dm.entries.rowwise().norm();
    dm.frobenius_norm = dm.entries.norm();
    dm.max_row_norm = dm.row_norms.size() ? dm.row_norms.maxCoeff() : 0.0;
    dm.pad.orig_rows = dm.entries.rows();
    dm.pad.orig_cols = dm.entries.cols();
    dm.pad.padded = false;
    dm.provenance = std::move(provenance);
    return dm;
}

namespace {

double parse_field(const std::string& field, size_t line_no, size_t col_no) {
    const char* begin = field.data();
    const char* end = begin + field.size();
    while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
    while (end > begin && (end[-1] == ' ' || end[-1] == '\t' || end[-1] == '\r')) --end;
    if (begin == end)
        throw Error(ErrKind::Format, "empty field at line " + std::to_string(line_no) +
                                         ", column " + std::to_string(col_no));
    double value = 0.0;
    auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc{} || res.ptr != end)
        throw Error(ErrKind::Format, "non-numeric field '" + std::string(begin, end) +
                                         "' at line " + std::to_string(line_no) + ", column " +
                                         std::to_string(col_no));
    if (!std::isfinite(value))
        throw Error(ErrKind::Value, "non-finite value at line " + std::to_string(line_no) +
                                        ", column " + std::to_string(col_no));
    return value;
}

}  // namespace

DataMatrix ingest_csv(const std::string& path, bool skip_header) {
    std::ifstream in(path);
    if (!in) throw Error(ErrKind::Io, "cannot open CSV file: " + path);

    std::vector<std::vector<double>> rows;
    std::string line;
    size_t line_no = 0;
    size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && skip_header) continue;
        // Ignore blank trailing lines.
        bool blank = true;
        for (char c : line)
            if (c != ' ' && c != '\t' && c != '\r') { blank = false; break; }
        if (blank) continue;

        std::vector<double> record;
        std::stringstream ss(line);
        std::string field;
        size_t col_no = 0;
        while (std::getline(ss, field, ',')) {
            ++col_no;
            record.push_back(parse_field(field, line_no, col_no));
        }
        if (!line.empty() && line.back() == ',')
            throw Error(ErrKind::Format, "trailing comma at line " + std::to_string(line_no));
        if (width == 0) {
            width = record.size();
        } else if (record.size() != width) {
            throw Error(ErrKind::Format,
                        "ragged record at line " + std::to_string(line_no) + ": expected " +
                            std::to_string(width) + " fields, found " +
                            std::to_string(record.size()));
        }
        rows.push_back(std::move(record));
    }
    if (rows.empty()) throw Error(ErrKind::EmptyInput, "CSV file has no data records: " + path);

    Eigen::MatrixXd m(Eigen::Index(rows.size()), Eigen::Index(width));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rows[size_t(i)][size_t(j)];
    return make_data_matrix(std::move(m), path);
}

DataMatrix pad_square(const DataMatrix& in) {
    const Eigen::Index orig_rows = in.pad.padded ? in.pad.orig_rows : in.rows();
    const Eigen::Index orig_cols = in.pad.padded ? in.pad.orig_cols : in.cols();
    const Eigen::Index side =
        Eigen::Index(next_pow2(uint64_t(std::max(in.rows(), in.cols()))));
    if (in.rows() == side && in.cols() == side) {
        DataMatrix out = in;
        out.pad.orig_rows = orig_rows;
        out.pad.orig_cols = orig_cols;
        out.pad.padded = (side != orig_rows || side != orig_cols);
        return out;
    }
    Eigen::MatrixXd padded = Eigen::MatrixXd::Zero(side, side);
    padded.topLeftCorner(in.rows(), in.cols()) = in.entries;
    DataMatrix out = make_data_matrix(std::move(padded), in.provenance);
    out.pad.orig_rows = orig_rows;
    out.pad.orig_cols = orig_cols;
    out.pad.padded = true;
    return out;
}

std::string format_double(double v) {
    // Shortest representation that round-trips; integers stay compact.
    char buf[40];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        double back = 0.0;
        std::sscanf(buf, "%lf", &back);
        if (back == v) return buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void emit_csv(const Eigen::MatrixXd& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrKind::Io, "cannot open CSV file for writing: " + path);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << format_double(m(i, j));
        }
        out << '\n';
    }
    if (!out) throw Error(ErrKind::Io, "failed writing CSV file: " + path);
}

}  // namespace qnpe
