#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "lca/error.hpp"
#include "lca/metrics.hpp"
#include "lca/policy.hpp"
#include "lca/transforms.hpp"

namespace py = pybind11;

namespace {

using Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

lca::ImageU8 to_image(const Array& a) {
  if (a.ndim() != 3 || a.shape(2) != 3 || a.shape(0) < 1 || a.shape(1) < 1) {
    throw lca::ValidationError("expected an HxWx3 uint8 array");
  }
  const auto h = static_cast<int>(a.shape(0));
  const auto w = static_cast<int>(a.shape(1));
  std::vector<std::uint8_t> data(a.data(), a.data() + a.size());
  return lca::ImageU8(w, h, std::move(data));
}

Array to_array(const lca::ImageU8& img) {
  Array out({img.height(), img.width(), 3});
  std::memcpy(out.mutable_data(), img.bytes().data(), img.bytes().size());
  return out;
}

struct Partners {
  std::vector<lca::ImageU8> images;
  lca::BatchContext batch;

  explicit Partners(const std::vector<Array>& arrays) {
    for (const auto& a : arrays) images.push_back(to_image(a));
    for (const auto& img : images) batch.partners.push_back(&img);
  }
};

lca::LcaPolicy make_policy(double probability, std::uint64_t seed, double noise_scale) {
  lca::LcaPolicy p;
  p.sub_policies = lca::lca_default();
  p.probability = probability;
  p.seed = seed;
  p.noise_scale = noise_scale;
  p.validate();
  return p;
}

}  // namespace

PYBIND11_MODULE(_lca, m) {
  m.doc() = "LCA augmentation primitives";

  py::register_exception<lca::ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<lca::DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<lca::IoError>(m, "IoError", PyExc_OSError);

  m.def("operation_names", [] {
    std::vector<std::string> names;
    for (const auto& spec : lca::operation_table()) names.emplace_back(lca::operation_name(spec.kind));
    return names;
  });

  m.def("sub_policies", [] {
    std::vector<std::tuple<int, std::string, std::string>> out;
    for (const auto& s : lca::lca_default()) {
      out.emplace_back(s.id, std::string(lca::operation_name(s.color_op)), std::string(lca::operation_name(s.geom_op)));
    }
    return out;
  });

  m.def("probability_ladder", &lca::probability_ladder);

  m.def(
      "apply_op",
      [](const std::string& name, const Array& image, double magnitude, std::vector<Array> partners) {
        lca::OpDraw draw;
        draw.kind = lca::parse_operation(name);
        draw.magnitude = magnitude;
        if (draw.kind == lca::OperationKind::kSamplePairing && !partners.empty()) draw.partner = 0;
        const lca::ImageU8 img = to_image(image);
        if (draw.kind == lca::OperationKind::kCutout) {
          draw.center_x = img.width() / 2;
          draw.center_y = img.height() / 2;
        }
        Partners p(partners);
        return to_array(lca::apply_operation(img, draw, p.batch));
      },
      py::arg("name"), py::arg("image"), py::arg("magnitude") = 0.0, py::arg("partners") = std::vector<Array>{});

  m.def(
      "apply_policy",
      [](const Array& image, double probability, std::uint64_t seed, std::vector<Array> partners,
         double noise_scale) {
        const lca::LcaPolicy policy = make_policy(probability, seed, noise_scale);
        lca::Rng rng(seed);
        Partners p(partners);
        lca::Augmented out = lca::apply_policy(to_image(image), p.batch, policy, rng);
        return py::make_tuple(to_array(out.image), lca::to_json(out.record).dump());
      },
      py::arg("image"), py::arg("probability"), py::arg("seed"), py::arg("partners") = std::vector<Array>{},
      py::arg("noise_scale") = 1.0);

  m.def(
      "replay",
      [](const Array& image, const std::string& record, std::vector<Array> partners, double noise_scale) {
        Partners p(partners);
        const auto rec = lca::applied_record_from_json(nlohmann::json::parse(record));
        return to_array(lca::replay(to_image(image), rec, p.batch, noise_scale));
      },
      py::arg("image"), py::arg("record"), py::arg("partners") = std::vector<Array>{}, py::arg("noise_scale") = 1.0);

  m.def(
      "metrics_report",
      [](const std::vector<std::vector<double>>& scores, const std::vector<int>& truths,
         const std::vector<std::string>& class_names) {
        std::vector<lca::ProbVector> s(scores.begin(), scores.end());
        return lca::to_json(lca::full_report(s, truths, class_names)).dump();
      },
      py::arg("scores"), py::arg("truths"), py::arg("class_names"));
}
