// SPDX-License-Identifier: Apache-2.0
#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ctxrep/cli.hpp"
#include "ctxrep/error.hpp"
#include "ctxrep/gmmflow.hpp"
#include "ctxrep/repulsion.hpp"
#include "ctxrep/steering.hpp"
#include "ctxrep/vendi.hpp"

namespace py = pybind11;
using namespace ctxrep;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

ContextBatch to_batch(const Array& a, bool point_set = false) {
    if (a.ndim() != 2) throw py::value_error("expected a 2-D array (batch, dim)");
    const auto b = static_cast<std::size_t>(a.shape(0)), d = static_cast<std::size_t>(a.shape(1));
    std::vector<double> v(a.data(), a.data() + b * d);
    return point_set ? ContextBatch::points(b, d, std::move(v)) : ContextBatch(b, d, std::move(v));
}

SymMatrix to_matrix(const Array& a) {
    if (a.ndim() != 2 || a.shape(0) != a.shape(1)) throw py::value_error("expected a square 2-D array");
    const auto n = static_cast<std::size_t>(a.shape(0));
    return SymMatrix(n, std::vector<double>(a.data(), a.data() + n * n));
}

Array to_array(std::span<const double> v, std::size_t rows, std::size_t cols) {
    Array out({rows, cols});
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

KernelSpec kernel_of(const std::string& kind, double bandwidth) {
    if (kind == "cosine") return KernelSpec::cosine();
    if (kind == "rbf") return KernelSpec::rbf(bandwidth);
    throw py::value_error("kernel must be 'cosine' or 'rbf'");
}

py::dict metrics_dict(const gmm::RunMetrics& m) {
    py::dict d;
    d["vendi_rbf"] = m.vendi_rbf;
    d["mode_coverage"] = m.mode_coverage;
    d["off_manifold_rate"] = m.off_manifold_rate;
    d["mean_nearest_mode_distance"] = m.mean_nearest_mode_distance;
    d["avg_pair_vendi"] = m.avg_pair_vendi;
    return d;
}

}  // namespace

PYBIND11_MODULE(_ctxrep, m) {
    m.doc() = "Contextual-space repulsion: diversity metric, repulsion update and mixture-flow testbed";

    static py::exception<Error> err(m, "CtxrepError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::set_error(err, (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
        }
    });

    m.def("cosine_kernel", [](const Array& x) {
        const auto k = cosine_kernel(to_batch(x));
        return to_array(k.entries(), k.dim(), k.dim());
    }, py::arg("batch"));

    m.def("rbf_kernel", [](const Array& x, double bandwidth) {
        const auto k = rbf_kernel(to_batch(x, true), bandwidth);
        return to_array(k.entries(), k.dim(), k.dim());
    }, py::arg("points"), py::arg("bandwidth"));

    m.def("eigh", [](const Array& a) {
        const auto e = jacobi_eigh(to_matrix(a));
        Array vals(static_cast<py::ssize_t>(e.dim));
        std::copy(e.eigenvalues.begin(), e.eigenvalues.end(), vals.mutable_data());
        return py::make_tuple(vals, to_array(e.eigenvectors, e.dim, e.dim));
    }, py::arg("matrix"), "Jacobi eigendecomposition; eigenvalues descending, eigenvectors as columns.");

    m.def("entropy_and_score", [](const Array& k) {
        const auto v = entropy_and_score(to_matrix(k));
        return py::make_tuple(v.entropy, v.score);
    }, py::arg("kernel"));

    m.def("vendi", [](const Array& x, const std::string& kernel, double bandwidth) {
        const auto v = entropy_and_score(build_kernel(to_batch(x, kernel == "rbf"), kernel_of(kernel, bandwidth)));
        return py::make_tuple(v.entropy, v.score);
    }, py::arg("batch"), py::arg("kernel") = "cosine", py::arg("bandwidth") = 1.0);

    m.def("entropy_gradient", [](const Array& x, const std::string& kernel, double bandwidth) {
        const auto g = entropy_gradient(to_batch(x, kernel == "rbf"), kernel_of(kernel, bandwidth));
        return to_array(g.values, g.batch_size, g.vector_dim);
    }, py::arg("batch"), py::arg("kernel") = "cosine", py::arg("bandwidth") = 1.0);

    m.def("average_pair_vendi", [](const Array& x, const std::string& kernel, double bandwidth) {
        return average_pair_vendi(to_batch(x, kernel == "rbf"), kernel_of(kernel, bandwidth));
    }, py::arg("batch"), py::arg("kernel") = "cosine", py::arg("bandwidth") = 1.0);

    m.def("repulse", [](const Array& x, double eta, int steps, bool normalize) {
        RepulsionConfig c;
        c.eta = eta;
        c.inner_steps = steps;
        c.gradient_normalization = normalize;
        const auto out = repulse(to_batch(x), c);
        return to_array(out.values(), out.batch_size(), out.vector_dim());
    }, py::arg("batch"), py::arg("eta"), py::arg("steps") = 1, py::arg("normalize") = false);

    m.def("blend", [](const std::vector<double>& a, const std::vector<double>& b, double alpha) {
        return steering::blend(a, b, alpha);
    }, py::arg("source"), py::arg("target"), py::arg("alpha"));

    m.def("simulate", [](const std::string& config_text, const std::string& method, std::uint64_t seed) {
        const auto cfg = cli::ExperimentConfig::parse(config_text);
        const auto world = cfg.world();
        const auto b = static_cast<std::size_t>(cfg.get_int("batch.size", 8));
        const auto trs = gmm::sample_batch(world, cfg.prompts(b), cfg.method_params(gmm::parse_method(method)), seed);
        py::list finals;
        for (const auto& tr : trs) finals.append(py::make_tuple(tr.latents.back()[0], tr.latents.back()[1]));
        py::dict out = metrics_dict(gmm::evaluate(trs, world));
        out["samples"] = finals;
        return out;
    }, py::arg("config") = "", py::arg("method") = "contextual", py::arg("seed") = 0,
       "One mixture-flow batch from `key = value` config text; returns metrics and final samples.");

    m.def("run_command", [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = cli::run_command(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
    }, py::arg("args"), "Runs a ctxrep CLI subcommand; returns (exit_code, stdout, stderr).");
}
