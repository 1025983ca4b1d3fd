/*
 * Copyright 2026 the stmunet authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "stmunet/config.hpp"
#include "stmunet/data.hpp"
#include "stmunet/gradcheck.hpp"
#include "stmunet/model.hpp"
#include "stmunet/nn.hpp"
#include "stmunet/ops.hpp"
#include "stmunet/train.hpp"

namespace py = pybind11;
using namespace stmunet;

namespace {

Tensor<float> tensor_from_array(const py::array_t<float, py::array::c_style>& arr) {
  std::vector<int64_t> dims(arr.shape(), arr.shape() + arr.ndim());
  std::vector<float> data(arr.data(), arr.data() + arr.size());
  return Tensor<float>(Shape(std::span<const int64_t>(dims)), std::move(data));
}

py::array_t<float> array_from_tensor(const Tensor<float>& t) {
  std::vector<py::ssize_t> dims;
  for (int i = 0; i < t.shape().rank(); ++i) dims.push_back(t.shape()[i]);
  py::array_t<float> arr(dims);
  std::copy(t.data(), t.data() + t.numel(), arr.mutable_data());
  return arr;
}

std::vector<SegmentationSample> samples_from_arrays(
    const py::array_t<float, py::array::c_style>& images,
    const py::array_t<float, py::array::c_style>& masks) {
  if (images.ndim() != 4 || masks.ndim() != 4 || images.shape(0) != masks.shape(0) ||
      images.shape(1) != 3 || masks.shape(1) != 1) {
    throw std::invalid_argument("expected images (n,3,H,W) and masks (n,1,H,W)");
  }
  const py::ssize_t n = images.shape(0);
  const int64_t h = images.shape(2), w = images.shape(3);
  std::vector<SegmentationSample> out;
  out.reserve(static_cast<size_t>(n));
  const int64_t img_n = 3 * h * w;
  const int64_t msk_n = h * w;
  for (py::ssize_t i = 0; i < n; ++i) {
    SegmentationSample s;
    s.id = "sample_" + std::to_string(i);
    s.image = Tensor<float>(Shape{3, h, w},
                            std::vector<float>(images.data() + i * img_n,
                                               images.data() + (i + 1) * img_n));
    s.mask = Tensor<float>(Shape{1, h, w},
                           std::vector<float>(masks.data() + i * msk_n,
                                              masks.data() + (i + 1) * msk_n));
    out.push_back(std::move(s));
  }
  return out;
}

ModelConfig config_from_kwargs(const std::vector<int>& channels, int size, int window,
                               int shift_size, int expand_ratio, bool use_swin_skips,
                               bool use_parallel_conv, uint64_t seed) {
  ModelConfig cfg;
  if (channels.size() != 5) throw std::invalid_argument("channels must have 5 entries");
  std::copy(channels.begin(), channels.end(), cfg.channels.begin());
  cfg.input_h = cfg.input_w = size;
  cfg.window = window;
  cfg.shift_size = shift_size;
  cfg.expand_ratio = expand_ratio;
  cfg.use_swin_skips = use_swin_skips;
  cfg.use_parallel_conv = use_parallel_conv;
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "stmunet: desk-scale STM-UNet segmentation kit";

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init(&config_from_kwargs), py::arg("channels") = std::vector<int>{32, 64, 128, 256, 512},
           py::arg("size") = 512, py::arg("window") = 8, py::arg("shift_size") = 5,
           py::arg("expand_ratio") = 2, py::arg("use_swin_skips") = true,
           py::arg("use_parallel_conv") = true, py::arg("seed") = 42)
      .def_readonly("input_h", &ModelConfig::input_h)
      .def_readonly("input_w", &ModelConfig::input_w)
      .def_readonly("window", &ModelConfig::window)
      .def_readonly("shift_size", &ModelConfig::shift_size)
      .def_readonly("use_swin_skips", &ModelConfig::use_swin_skips)
      .def_readonly("use_parallel_conv", &ModelConfig::use_parallel_conv)
      .def_readonly("seed", &ModelConfig::seed)
      .def("__repr__", [](const ModelConfig& c) {
        return "<ModelConfig " + std::to_string(c.input_h) + "x" + std::to_string(c.input_w) +
               " seed=" + std::to_string(c.seed) + ">";
      });

  py::class_<Model<float>>(m, "Model")
      .def_static("build", &build_model<float>, py::arg("config"))
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def_property_readonly("config", [](const Model<float>& m2) { return m2.cfg; })
      .def("forward",
           [](Model<float>& m2, const py::array_t<float, py::array::c_style>& x) {
             return array_from_tensor(model_forward(m2, tensor_from_array(x)));
           },
           py::arg("x"), "Logits for an (N,3,H,W) float32 batch.")
      .def("param_count", &param_count<float>)
      .def("param_names",
           [](const Model<float>& m2) {
             std::vector<std::string> names;
             for (const auto& p : m2.params) names.push_back(p.name);
             return names;
           })
      .def("checksum", [](const Model<float>& m2) { return checksum_hex(param_checksum(m2)); })
      .def("save", &save_checkpoint, py::arg("path"));

  m.def("synth_blobs",
        [](int n, int size, uint64_t seed) {
          const auto samples = synth_blobs(n, size, seed);
          py::array_t<float> images({static_cast<py::ssize_t>(n), py::ssize_t{3},
                                     static_cast<py::ssize_t>(size),
                                     static_cast<py::ssize_t>(size)});
          py::array_t<float> masks({static_cast<py::ssize_t>(n), py::ssize_t{1},
                                    static_cast<py::ssize_t>(size),
                                    static_cast<py::ssize_t>(size)});
          std::vector<std::string> ids;
          for (size_t i = 0; i < samples.size(); ++i) {
            std::copy(samples[i].image.data(),
                      samples[i].image.data() + samples[i].image.numel(),
                      images.mutable_data() + static_cast<int64_t>(i) * 3 * size * size);
            std::copy(samples[i].mask.data(), samples[i].mask.data() + samples[i].mask.numel(),
                      masks.mutable_data() + static_cast<int64_t>(i) * size * size);
            ids.push_back(samples[i].id);
          }
          return py::make_tuple(images, masks, ids);
        },
        py::arg("n"), py::arg("size"), py::arg("seed"),
        "Synthetic ellipse-lesion dataset: (images, masks, ids).");

  m.def("train",
        [](Model<float>& model, const py::array_t<float, py::array::c_style>& images,
           const py::array_t<float, py::array::c_style>& masks, int epochs, double lr, int batch,
           uint64_t seed, double split_ratio) {
          auto samples = samples_from_arrays(images, masks);
          const DatasetSplit sp = split(samples, split_ratio, seed);
          TrainConfig cfg;
          cfg.epochs = epochs;
          cfg.lr = lr;
          cfg.batch_size_train = batch;
          cfg.seed = seed;
          const TrainResult r = train(model, select_samples(samples, sp.train),
                                      select_samples(samples, sp.val), cfg, nullptr);
          apply_param_snapshot(model, r.best_params);
          py::list log;
          for (const auto& e : r.epochs) {
            log.append(py::dict(py::arg("epoch") = e.epoch, py::arg("loss") = e.loss,
                                py::arg("val_miou") = e.val_miou,
                                py::arg("val_mdice") = e.val_mdice));
          }
          return log;
        },
        py::arg("model"), py::arg("images"), py::arg("masks"), py::arg("epochs") = 5,
        py::arg("lr") = 1e-4, py::arg("batch") = 8, py::arg("seed") = 1,
        py::arg("split_ratio") = 0.8,
        "Train on (n,3,H,W)/(n,1,H,W) arrays with a seeded 8:2 split; keeps the best epoch.");

  m.def("evaluate",
        [](Model<float>& model, const py::array_t<float, py::array::c_style>& images,
           const py::array_t<float, py::array::c_style>& masks) {
          const auto samples = samples_from_arrays(images, masks);
          const EvalReport r = evaluate(model, samples);
          py::list per_image;
          for (const auto& e : r.per_image) {
            per_image.append(py::make_tuple(e.id, e.iou, e.dice));
          }
          return py::make_tuple(r.miou, r.mdice, per_image);
        },
        py::arg("model"), py::arg("images"), py::arg("masks"),
        "Per-image IoU/Dice at threshold 0.5: (miou, mdice, per_image).");

  m.def("iou",
        [](const py::array_t<float, py::array::c_style>& a,
           const py::array_t<float, py::array::c_style>& b) {
          return mask_iou(tensor_from_array(a), tensor_from_array(b));
        },
        py::arg("pred"), py::arg("gt"));
  m.def("dice",
        [](const py::array_t<float, py::array::c_style>& a,
           const py::array_t<float, py::array::c_style>& b) {
          return mask_dice(tensor_from_array(a), tensor_from_array(b));
        },
        py::arg("pred"), py::arg("gt"));

  m.def("conv2d",
        [](const py::array_t<float, py::array::c_style>& x,
           const py::array_t<float, py::array::c_style>& w,
           const py::array_t<float, py::array::c_style>& b, int stride, int padding) {
          Conv2dParams<float> p{tensor_from_array(w), tensor_from_array(b), stride, padding};
          return array_from_tensor(conv2d(tensor_from_array(x), p));
        },
        py::arg("x"), py::arg("weight"), py::arg("bias"), py::arg("stride") = 1,
        py::arg("padding") = 0);
  m.def("softmax",
        [](const py::array_t<float, py::array::c_style>& x, int axis) {
          return array_from_tensor(softmax(tensor_from_array(x), axis));
        },
        py::arg("x"), py::arg("axis") = -1);

  m.def("gradcheck_suite",
        [](uint64_t seed) {
          py::list out;
          const auto suite = standard_gradcheck_suite();
          for (size_t i = 0; i < suite.size(); ++i) {
            out.append(py::make_tuple(suite[i].name, suite[i].run(seed + i), suite[i].tol));
          }
          return out;
        },
        py::arg("seed") = 1000, "Runs every finite-difference case: [(name, max_err, tol)].");

  m.attr("__version__") = "0.1.0";
}
