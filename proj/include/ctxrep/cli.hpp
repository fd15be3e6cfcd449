// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ctxrep/gmmflow.hpp"
#include "ctxrep/linalg.hpp"
#include "ctxrep/repulsion.hpp"
#include "ctxrep/steering.hpp"
#include "ctxrep/toydit.hpp"

namespace ctxrep::cli {

// Flat `key = value` document with `#` comments. Keys are dotted
// (section.name); unknown keys are rejected.
class ExperimentConfig {
public:
    static ExperimentConfig parse(std::string_view text);
    static ExperimentConfig load(const std::string& path);
    static const std::vector<std::string>& known_keys();

    bool has(const std::string& key) const { return values_.contains(key); }
    void set(const std::string& key, std::string value);

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;

    gmm::MixtureWorld world() const;
    std::vector<std::vector<double>> prompts(std::size_t batch) const;
    // repulsion.* keys layered over repulsion.preset when given.
    RepulsionConfig repulsion() const;
    gmm::MethodParams method_params(gmm::Method m) const;
    toydit::ToyDiTConfig toy() const;
    std::vector<TimestepInterval> timestep_sweep() const;
    std::vector<std::size_t> batch_sweep() const;
    std::vector<BlockGroup> block_sweep() const;

private:
    std::map<std::string, std::string> values_;
};

// Header `dim0,dim1,...`, one sample per row. With point_set, zero rows are
// accepted (RBF inputs).
ContextBatch read_batch_csv(std::istream& in, bool point_set = false);
ContextBatch read_batch_csv_file(const std::string& path, bool point_set = false);
void write_batch_csv(std::ostream& out, const ContextBatch& batch);

// Rows (sample, block, stream, token, dim, value).
void write_snapshot_csv(std::ostream& out, const std::vector<toydit::BlockSnapshot>& snapshots,
                        std::size_t token_dim);

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t batches = 0;
};

// Analytic entropy gradient against central finite differences of the
// entropy of the cosine kernel, over `seeds` random batches.
GradCheckResult gradient_check(std::size_t batch, std::size_t dim, std::size_t seeds, double fd_step,
                               std::uint64_t base_seed = 0);

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ctxrep::cli
