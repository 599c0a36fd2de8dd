/* Copyright 2026 The SLT Baseline Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "slt/cli.hpp"
#include "slt/config_io.hpp"
#include "slt/ctc.hpp"
#include "slt/data.hpp"
#include "slt/error.hpp"
#include "slt/metrics.hpp"
#include "slt/pipeline.hpp"

namespace py = pybind11;
using namespace slt;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

num::Tensor to_tensor(const Array& a) {
  if (a.ndim() != 2) throw RankError("expected a 2-D array, got " + std::to_string(a.ndim()) + "-D");
  const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
  return num::Tensor::matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

Array to_array(const num::Tensor& t) {
  Array out({t.dim(0), t.dim(1)});
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

py::object to_python(const nlohmann::ordered_json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

std::vector<metrics::Tokens> tokenize(const std::vector<std::string>& sentences) {
  std::vector<metrics::Tokens> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(translation::split_words(s));
  return out;
}

py::dict triplet_dict(const data::Triplet& t) {
  py::dict d;
  d["id"] = t.id;
  d["features"] = to_array(t.features.values);
  d["gloss"] = t.gloss;
  d["text"] = t.text;
  d["language"] = t.language;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Sign language translation baseline: CTC, metrics, data and pipeline entry points";

  auto base = py::register_exception<Error>(m, "SltError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base);
  py::register_exception<ArgumentError>(m, "ArgumentError", base);
  py::register_exception<DimensionError>(m, "DimensionError", base);
  py::register_exception<RankError>(m, "RankError", base);
  py::register_exception<VocabularyError>(m, "VocabularyError", base);
  py::register_exception<CheckpointRequiredError>(m, "CheckpointRequiredError", base);
  py::register_exception<InfeasibleError>(m, "InfeasibleError", base);
  py::register_exception<UndefinedError>(m, "UndefinedError", base);
  py::register_exception<CorpusError>(m, "CorpusError", base);
  py::register_exception<IoError>(m, "IoError", base);
  py::register_exception<ParseError>(m, "ParseError", base);
  py::register_exception<CorruptionError>(m, "CorruptionError", base);
  py::register_exception<UnsupportedVersionError>(m, "UnsupportedVersionError", base);

  // CTC over a (frames x classes) probability matrix, blank in column 0.
  m.def(
      "ctc_loss", [](const Array& probs, const std::vector<int>& target) {
        return ctc::ctc_forward(ctc::GlossPosterior(to_tensor(probs)), target);
      },
      py::arg("probs"), py::arg("target"), "Negative log-probability of the target under the posterior.");
  m.def(
      "ctc_gradient", [](const Array& logits, const std::vector<int>& target) {
        return to_array(ctc::ctc_gradient(to_tensor(logits), target));
      },
      py::arg("logits"), py::arg("target"), "Gradient of the CTC loss with respect to the logits.");
  m.def(
      "ctc_greedy_decode", [](const Array& probs) { return ctc::ctc_greedy_decode(ctc::GlossPosterior(to_tensor(probs))); },
      py::arg("probs"));
  m.def(
      "ctc_beam_decode",
      [](const Array& probs, int width) { return ctc::ctc_beam_decode(ctc::GlossPosterior(to_tensor(probs)), width); },
      py::arg("probs"), py::arg("width") = 4);
  m.def(
      "ctc_brute_force",
      [](const Array& probs) {
        const auto r = ctc::ctc_brute_force_oracle(ctc::GlossPosterior(to_tensor(probs)));
        py::dict marginals;
        for (const auto& [seq, p] : r.marginals) marginals[py::tuple(py::cast(seq))] = p;
        return py::make_tuple(r.best, r.probability, marginals);
      },
      py::arg("probs"), "Exhaustive (best sequence, its probability, all marginals) for tiny inputs.");

  // Metrics on whitespace-tokenized sentences. WER here is a fraction.
  m.def(
      "wer", [](const std::string& hyp, const std::string& ref) {
        return metrics::wer(translation::split_words(hyp), translation::split_words(ref));
      },
      py::arg("hyp"), py::arg("ref"));
  m.def(
      "corpus_wer",
      [](const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
        return metrics::corpus_wer(tokenize(hyps), tokenize(refs));
      },
      py::arg("hyps"), py::arg("refs"));
  m.def(
      "bleu",
      [](const std::vector<std::string>& hyps, const std::vector<std::string>& refs, int n) {
        return metrics::bleu(tokenize(hyps), tokenize(refs), n);
      },
      py::arg("hyps"), py::arg("refs"), py::arg("n") = 4);
  m.def(
      "rouge_l",
      [](const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
        return metrics::rouge_l(tokenize(hyps), tokenize(refs));
      },
      py::arg("hyps"), py::arg("refs"));

  // Synthetic data.
  m.def("grammar", &data::grammar, py::arg("gloss"));
  m.def("invert_grammar", &data::invert_grammar, py::arg("text"));
  m.def(
      "generate_corpus",
      [](const py::dict& spec, int n_train, int n_dev, int n_test) {
        data::SyntheticSpec s;
        config::read(nlohmann::json::parse(py::module_::import("json").attr("dumps")(spec).cast<std::string>()), s,
                     "spec");
        const auto corpus = data::generate_corpus(s, n_train, n_dev, n_test);
        py::dict out;
        for (const auto& [name, split] :
             {std::pair{"train", &corpus.train}, std::pair{"dev", &corpus.dev}, std::pair{"test", &corpus.test}}) {
          py::list items;
          for (const auto& t : *split) items.append(triplet_dict(t));
          out[name] = items;
        }
        return out;
      },
      py::arg("spec") = py::dict(), py::arg("n_train") = 500, py::arg("n_dev") = 50, py::arg("n_test") = 50);
  m.def(
      "read_features", [](const std::string& path) { return to_array(data::read_features(path).values); },
      py::arg("path"));
  m.def(
      "write_features",
      [](const std::string& path, const Array& frames) { data::write_features(path, {to_tensor(frames)}); },
      py::arg("path"), py::arg("frames"));

  // Trained checkpoints.
  m.def(
      "evaluate",
      [](const std::string& checkpoint, const std::string& data_dir, const std::string& task,
         const std::string& split, int beam_width, double length_penalty, std::optional<int> ctc_beam_width) {
        auto model = pipeline::load_checkpoint(checkpoint);
        const auto corpus = data::load_splits(data_dir);
        pipeline::EvalOptions opts;
        opts.beam_width = beam_width;
        opts.length_penalty = length_penalty;
        opts.ctc_beam_width = ctc_beam_width;
        metrics::EvalReport report;
        {
          py::gil_scoped_release release;
          report = pipeline::evaluate(model, corpus, metrics::task_from_string(task), split, opts);
        }
        return to_python(report.to_json());
      },
      py::arg("checkpoint"), py::arg("data_dir"), py::arg("task"), py::arg("split") = "test", py::arg("beam_width") = 4,
      py::arg("length_penalty") = 1.0, py::arg("ctc_beam_width") = py::none());

  // The command line, in process.
  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs one command line; returns (exit_code, stdout, stderr).");
}
