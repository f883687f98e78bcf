#include "fsgan/cli.hpp"
#include "fsgan/consistency.hpp"
#include "fsgan/data.hpp"
#include "fsgan/masking.hpp"
#include "fsgan/metrics.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>

namespace py = pybind11;
using namespace fsgan;

namespace {

py::array_t<double> to_numpy(const Tensor& t)
{
    py::array_t<double> out(std::vector<py::ssize_t>(t.shape.begin(), t.shape.end()));
    std::copy(t.data.begin(), t.data.end(), out.mutable_data());
    return out;
}

Tensor from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a)
{
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

py::dict fid_dict(const FidReport& r)
{
    py::dict d;
    d["value"] = r.value;
    d["regularized"] = r.regularized;
    d["epsilon"] = r.epsilon;
    d["n_real"] = r.n_real;
    d["n_fake"] = r.n_fake;
    d["dimension"] = r.dimension;
    return d;
}

} // namespace

PYBIND11_MODULE(_fsgan, m)
{
    m.doc() = "Few-shot GAN adaptation core";
    m.attr("__version__") = FSGAN_VERSION;

    m.def(
        "run_cli", [](const std::vector<std::string>& args) { return run_cli(args); }, py::arg("args"),
        "Runs the fsgan command line with the given arguments and returns its exit code.");

    m.def(
        "synth_images",
        [](std::size_t count, std::uint64_t seed, bool target) {
            SynthDomainSpec spec;
            spec.count = count;
            spec.seed = seed;
            if (target) spec.target_shift = TargetShift{};
            return to_numpy(synth_domain(spec).images);
        },
        py::arg("count"), py::arg("seed") = 0, py::arg("target") = false);

    m.def(
        "perceptual_distance",
        [](const py::array_t<double>& a, const py::array_t<double>& b) {
            return perceptual_distance(from_numpy(a), from_numpy(b));
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "intra_diversity",
        [](const py::array_t<double>& generated, const py::array_t<double>& training) {
            const auto r = intra_diversity_of_images(from_numpy(generated), from_numpy(training));
            py::dict d;
            d["mean"] = r.intra_diversity;
            d["std"] = r.std_over_clusters;
            d["per_cluster"] = r.per_cluster;
            d["cluster_sizes"] = r.cluster_sizes;
            d["assignment"] = r.assignment.cluster;
            return d;
        },
        py::arg("generated"), py::arg("training"));

    m.def(
        "desk_fid",
        [](const py::array_t<double>& real, const py::array_t<double>& fake) {
            return fid_dict(desk_fid(from_numpy(real), from_numpy(fake)));
        },
        py::arg("real"), py::arg("fake"));

    m.def(
        "kl_divergence",
        [](const std::vector<double>& p, const std::vector<double>& q) { return kl_divergence(p, q); },
        py::arg("p_target"), py::arg("p_source"));

    m.def(
        "sample_mask",
        [](std::size_t length, double ratio, std::uint64_t seed) {
            return sample_mask_from_seed(length, ratio, seed).masked_indices;
        },
        py::arg("length"), py::arg("ratio"), py::arg("seed"));
}
