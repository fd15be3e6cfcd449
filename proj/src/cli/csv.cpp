// SPDX-License-Identifier: Apache-2.0
#include <charconv>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "ctxrep/cli.hpp"
#include "ctxrep/error.hpp"

namespace ctxrep::cli {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) {
        const auto b = field.find_first_not_of(" \t\r");
        const auto e = field.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string{} : field.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

ContextBatch read_batch_csv(std::istream& in, bool point_set) {
    std::string line;
    if (!std::getline(in, line)) fail(ErrorKind::InvalidArgument, "csv: missing header");
    const auto header = split_fields(line);
    if (header.empty()) fail(ErrorKind::InvalidArgument, "csv: empty header");
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (header[j] != "dim" + std::to_string(j)) {
            fail(ErrorKind::InvalidArgument, "csv: header must be dim0,dim1,... (column " + std::to_string(j) + ")");
        }
    }
    const std::size_t dim = header.size();
    std::vector<double> values;
    std::size_t rows = 0;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto fields = split_fields(line);
        if (fields.size() != dim) {
            fail(ErrorKind::LengthMismatch, "csv line " + std::to_string(lineno) + ": expected " +
                                                std::to_string(dim) + " fields, got " + std::to_string(fields.size()));
        }
        for (const auto& f : fields) {
            double x = 0.0;
            const auto* end = f.data() + f.size();
            const auto [ptr, ec] = std::from_chars(f.data(), end, x);
            if (ec != std::errc() || ptr != end) {
                fail(ErrorKind::InvalidArgument, "csv line " + std::to_string(lineno) + ": bad number '" + f + "'");
            }
            values.push_back(x);
        }
        ++rows;
    }
    if (rows == 0) fail(ErrorKind::InvalidArgument, "csv: no samples");
    return point_set ? ContextBatch::points(rows, dim, std::move(values)) : ContextBatch(rows, dim, std::move(values));
}

ContextBatch read_batch_csv_file(const std::string& path, bool point_set) {
    std::ifstream f(path);
    if (!f) fail(ErrorKind::InvalidArgument, "cannot open '" + path + "'");
    return read_batch_csv(f, point_set);
}

void write_batch_csv(std::ostream& out, const ContextBatch& batch) {
    const auto old = out.precision(std::numeric_limits<double>::max_digits10);
    for (std::size_t j = 0; j < batch.vector_dim(); ++j) out << (j ? "," : "") << "dim" << j;
    out << '\n';
    for (std::size_t i = 0; i < batch.batch_size(); ++i) {
        const auto r = batch.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) out << (j ? "," : "") << r[j];
        out << '\n';
    }
    out.precision(old);
}

void write_snapshot_csv(std::ostream& out, const std::vector<toydit::BlockSnapshot>& snapshots,
                        std::size_t token_dim) {
    if (token_dim == 0) fail(ErrorKind::InvalidArgument, "snapshot csv: token_dim must be positive");
    const auto old = out.precision(std::numeric_limits<double>::max_digits10);
    out << "sample,block,stream,token,dim,value\n";
    auto emit = [&](std::size_t sample, std::size_t block, const char* stream, const std::vector<double>& toks) {
        for (std::size_t idx = 0; idx < toks.size(); ++idx) {
            out << sample << ',' << block << ',' << stream << ',' << idx / token_dim << ',' << idx % token_dim << ','
                << toks[idx] << '\n';
        }
    };
    for (const auto& snap : snapshots) {
        for (std::size_t s = 0; s < snap.states.size(); ++s) {
            emit(s, snap.block, "text", snap.states[s].text);
            emit(s, snap.block, "image", snap.states[s].image);
        }
    }
    out.precision(old);
}

}  // namespace ctxrep::cli
