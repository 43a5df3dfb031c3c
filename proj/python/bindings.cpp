#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>
#include <vector>

#include "oscbp/bp_model.hpp"
#include "oscbp/cli_io.hpp"
#include "oscbp/error.hpp"
#include "oscbp/eval_reporting.hpp"
#include "oscbp/morpho_grid.hpp"
#include "oscbp/signal_prep.hpp"
#include "oscbp/synth.hpp"
#include "oscbp/trainer.hpp"

namespace py = pybind11;
using namespace oscbp;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_numpy(const std::vector<double>& v) { return Array(static_cast<py::ssize_t>(v.size()), v.data()); }

std::vector<double> from_numpy(const Array& a) { return {a.data(), a.data() + a.size()}; }

Array grid_to_numpy(const grid::MorphoTemporalGrid& g) {
  Array out({static_cast<py::ssize_t>(g.rows), static_cast<py::ssize_t>(g.cols)});
  std::copy(g.values.begin(), g.values.end(), out.mutable_data());
  return out;
}

std::vector<double> square_grid(const Array& a, std::size_t n) {
  if (a.ndim() != 2 || a.shape(0) != static_cast<py::ssize_t>(n) ||
      a.shape(1) != static_cast<py::ssize_t>(n)) {
    throw Error(ErrorKind::Shape, "grid must be a " + std::to_string(n) + "x" +
                                      std::to_string(n) + " array");
  }
  return from_numpy(a);
}

const char* source_name(grid::ColumnSource s) {
  switch (s) {
    case grid::ColumnSource::Original: return "original";
    case grid::ColumnSource::Interpolated: return "interpolated";
    case grid::ColumnSource::Extrapolated: return "extrapolated";
  }
  return "?";
}

py::dict stats_dict(const eval::ErrorStats& s) {
  py::dict d;
  d["me"] = s.me;
  d["mae"] = s.mae;
  d["sde"] = s.sde;
  return d;
}

}  // namespace

PYBIND11_MODULE(_oscbp, m) {
  m.doc() = "Oscillometric blood pressure estimation core";

  static py::exception<Error> error_type(m, "OscbpError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error_type, e.what());
    }
  });

  py::enum_<model::Target>(m, "Target").value("SBP", model::Target::SBP).value("DBP", model::Target::DBP);
  py::enum_<model::Variant>(m, "Variant")
      .value("CNN", model::Variant::Cnn)
      .value("CNN_LSTM1", model::Variant::CnnLstm1)
      .value("CNN_LSTM2", model::Variant::CnnLstm2);
  py::enum_<train::Optimizer>(m, "Optimizer")
      .value("GRADIENT_DESCENT", train::Optimizer::GradientDescent)
      .value("ADAM", train::Optimizer::Adam);

  // Records and preprocessing

  py::class_<signal::CuffDeflationRecord>(m, "Record")
      .def(py::init([](std::string subject, std::string record, double fs, const Array& samples,
                       double sbp, double dbp) {
             return signal::CuffDeflationRecord{std::move(subject), std::move(record), fs,
                                                from_numpy(samples), sbp, dbp};
           }),
           py::arg("subject_id"), py::arg("record_id"), py::arg("sampling_rate"), py::arg("samples"),
           py::arg("ref_sbp"), py::arg("ref_dbp"))
      .def_readwrite("subject_id", &signal::CuffDeflationRecord::subject_id)
      .def_readwrite("record_id", &signal::CuffDeflationRecord::record_id)
      .def_readwrite("sampling_rate", &signal::CuffDeflationRecord::sampling_rate)
      .def_readwrite("ref_sbp", &signal::CuffDeflationRecord::ref_sbp)
      .def_readwrite("ref_dbp", &signal::CuffDeflationRecord::ref_dbp)
      .def_property(
          "samples", [](const signal::CuffDeflationRecord& r) { return to_numpy(r.samples); },
          [](signal::CuffDeflationRecord& r, const Array& a) { r.samples = from_numpy(a); });

  py::class_<signal::SignalConfig>(m, "SignalConfig")
      .def(py::init<>())
      .def_readwrite("hp_cutoff_hz", &signal::SignalConfig::hp_cutoff_hz)
      .def_readwrite("hp_order", &signal::SignalConfig::hp_order)
      .def_readwrite("lp_cutoff_hz", &signal::SignalConfig::lp_cutoff_hz)
      .def_readwrite("lp_order", &signal::SignalConfig::lp_order)
      .def_readwrite("working_rate_hz", &signal::SignalConfig::working_rate_hz)
      .def_readwrite("ampd_window_s", &signal::SignalConfig::ampd_window_s)
      .def_readwrite("ampd_overlap", &signal::SignalConfig::ampd_overlap)
      .def_readwrite("peak_dedup_s", &signal::SignalConfig::peak_dedup_s)
      .def_readwrite("trough_half_window", &signal::SignalConfig::trough_half_window)
      .def_readwrite("duration_tolerance_s", &signal::SignalConfig::duration_tolerance_s)
      .def_readwrite("mz_threshold", &signal::SignalConfig::mz_threshold);

  py::class_<signal::PulseSegment>(m, "PulseSegment")
      .def_readonly("start_index", &signal::PulseSegment::start_index)
      .def_readonly("end_index", &signal::PulseSegment::end_index)
      .def_readonly("peak_index", &signal::PulseSegment::peak_index)
      .def_readonly("minimum_index", &signal::PulseSegment::minimum_index)
      .def_readonly("peak_amp", &signal::PulseSegment::peak_amp)
      .def_readonly("trough_amp", &signal::PulseSegment::trough_amp)
      .def_readonly("pulse_amp", &signal::PulseSegment::pulse_amp)
      .def_readonly("duration", &signal::PulseSegment::duration)
      .def_readonly("trough_is_fallback", &signal::PulseSegment::trough_is_fallback)
      .def_readonly("is_outlier", &signal::PulseSegment::is_outlier);

  py::class_<signal::PreprocessResult>(m, "PreprocessResult")
      .def_property_readonly("omw", [](const signal::PreprocessResult& r) { return to_numpy(r.omw.samples); })
      .def_property_readonly("slow",
                             [](const signal::PreprocessResult& r) { return to_numpy(r.omw.slow_component); })
      .def_property_readonly("sampling_rate", [](const signal::PreprocessResult& r) { return r.omw.sampling_rate; })
      .def_readonly("peaks", &signal::PreprocessResult::peaks)
      .def_readonly("pulses", &signal::PreprocessResult::pulses)
      .def_readonly("scale", &signal::PreprocessResult::scale);

  m.def("preprocess", &signal::preprocess, py::arg("record"), py::arg("config") = signal::SignalConfig{},
        "Resample, filter, detect beats, segment, flag outliers and normalize one record.");
  m.def("detect_peaks",
        [](const Array& x, double fs, double window_s) {
          const auto v = from_numpy(x);
          return signal::detect_peaks({v, std::vector<double>(v.size(), 0.0), fs}, window_s);
        },
        py::arg("samples"), py::arg("sampling_rate"), py::arg("window_s") = 6.0);

  // Grids

  py::class_<grid::GridConfig>(m, "GridConfig")
      .def(py::init<>())
      .def_readwrite("p_min", &grid::GridConfig::p_min)
      .def_readwrite("p_max", &grid::GridConfig::p_max)
      .def_readwrite("rows", &grid::GridConfig::rows)
      .def_readwrite("clamp_extrapolation", &grid::GridConfig::clamp_extrapolation)
      .def_property_readonly("columns", &grid::GridConfig::columns);

  py::class_<grid::MorphoTemporalGrid>(m, "Grid")
      .def_property_readonly("values", &grid_to_numpy)
      .def_readonly("column_pressure", &grid::MorphoTemporalGrid::column_pressure)
      .def_property_readonly("provenance", [](const grid::MorphoTemporalGrid& g) {
        std::vector<std::string> out;
        for (auto s : g.provenance) out.emplace_back(source_name(s));
        return out;
      });

  m.def("build_grid",
        [](const signal::PreprocessResult& r, const grid::GridConfig& c) {
          return grid::build_grid(r.pulses, r.omw.samples, r.omw.slow_component, c);
        },
        py::arg("preprocessed"), py::arg("config") = grid::GridConfig{});
  m.def("resample_pulse",
        [](const Array& x, std::size_t n) { return to_numpy(grid::resample_pulse(from_numpy(x), n)); },
        py::arg("pulse"), py::arg("n") = 215);

  // Synthetic data

  py::class_<synth::SyntheticCohortConfig>(m, "CohortConfig")
      .def(py::init<>())
      .def_readwrite("n_subjects", &synth::SyntheticCohortConfig::n_subjects)
      .def_readwrite("records_per_subject", &synth::SyntheticCohortConfig::records_per_subject)
      .def_readwrite("noise_sd", &synth::SyntheticCohortConfig::noise_sd)
      .def_readwrite("artifact_rate", &synth::SyntheticCohortConfig::artifact_rate)
      .def_readwrite("sampling_rate", &synth::SyntheticCohortConfig::sampling_rate)
      .def_readwrite("deflation_rate", &synth::SyntheticCohortConfig::deflation_rate)
      .def_readwrite("envelope_asymmetry", &synth::SyntheticCohortConfig::envelope_asymmetry)
      .def_readwrite("sys_ratio", &synth::SyntheticCohortConfig::sys_ratio)
      .def_readwrite("dia_ratio", &synth::SyntheticCohortConfig::dia_ratio)
      .def_readwrite("record_jitter", &synth::SyntheticCohortConfig::record_jitter)
      .def_readwrite("seed", &synth::SyntheticCohortConfig::seed);

  py::class_<synth::SyntheticTruth>(m, "Truth")
      .def_readonly("sbp", &synth::SyntheticTruth::sbp)
      .def_readonly("dbp", &synth::SyntheticTruth::dbp)
      .def_readonly("map", &synth::SyntheticTruth::map)
      .def_readonly("beat_times", &synth::SyntheticTruth::beat_times)
      .def_readonly("injected_artifact_indices", &synth::SyntheticTruth::injected_artifact_indices);

  m.def("generate_record",
        [](const synth::SyntheticCohortConfig& c, std::uint64_t seed) {
          auto g = synth::generate_record(c, seed);
          return py::make_tuple(std::move(g.record), std::move(g.truth));
        },
        py::arg("config"), py::arg("seed"));
  m.def("generate_cohort",
        [](const synth::SyntheticCohortConfig& c) {
          auto cohort = synth::generate_cohort(c);
          return py::make_tuple(std::move(cohort.records), std::move(cohort.truth));
        },
        py::arg("config"));
  m.def("maa_oracle",
        [](const signal::PreprocessResult& r, double sys_ratio, double dia_ratio) {
          const auto e = synth::maa_oracle(r.pulses, r.omw.slow_component, sys_ratio, dia_ratio);
          py::dict d;
          d["sbp"] = e.sbp;
          d["dbp"] = e.dbp;
          d["map"] = e.map;
          return d;
        },
        py::arg("preprocessed"), py::arg("sys_ratio") = 0.55, py::arg("dia_ratio") = 0.75);

  // Model and training

  py::class_<model::ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("n_kernels", &model::ModelConfig::n_kernels)
      .def_readwrite("kernel_width", &model::ModelConfig::kernel_width)
      .def_readwrite("lstm_layers", &model::ModelConfig::lstm_layers)
      .def_readwrite("lstm_hidden", &model::ModelConfig::lstm_hidden)
      .def_readwrite("dense_widths", &model::ModelConfig::dense_widths)
      .def_readwrite("grid_size", &model::ModelConfig::grid_size)
      .def_readwrite("reverse_time", &model::ModelConfig::reverse_time)
      .def("with_variant", &model::with_variant);

  py::class_<model::BpRegressor>(m, "BpRegressor")
      .def_static("init", &model::BpRegressor::init, py::arg("config"), py::arg("seed"))
      .def_static("zeros", &model::BpRegressor::zeros, py::arg("config"))
      .def_property_readonly("config", &model::BpRegressor::config)
      .def("predict",
           [](const model::BpRegressor& self, const Array& g) {
             return self.predict(square_grid(g, self.config().grid_size));
           },
           py::arg("grid"))
      .def("parameter_count", &model::BpRegressor::parameter_count)
      .def("shape_trace", &model::BpRegressor::shape_trace)
      .def("save",
           [](const model::BpRegressor& self, const std::filesystem::path& path, model::Target t) {
             std::ofstream out(path, std::ios::binary);
             if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string());
             model::save_model(out, self, t);
           },
           py::arg("path"), py::arg("target"))
      .def_static("load", [](const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
        auto loaded = model::load_model(in);
        return py::make_tuple(std::move(loaded.model), loaded.target);
      });

  py::class_<train::TrainingConfig>(m, "TrainingConfig")
      .def(py::init<>())
      .def_readwrite("initial_lr", &train::TrainingConfig::initial_lr)
      .def_readwrite("lr_patience", &train::TrainingConfig::lr_patience)
      .def_readwrite("lr_factor", &train::TrainingConfig::lr_factor)
      .def_readwrite("early_stop_patience", &train::TrainingConfig::early_stop_patience)
      .def_readwrite("l1_lambda", &train::TrainingConfig::l1_lambda)
      .def_readwrite("max_epochs", &train::TrainingConfig::max_epochs)
      .def_readwrite("seed", &train::TrainingConfig::seed)
      .def_readwrite("target", &train::TrainingConfig::target)
      .def_readwrite("optimizer", &train::TrainingConfig::optimizer)
      .def_readwrite("standardize_targets", &train::TrainingConfig::standardize_targets);

  py::class_<train::Sample>(m, "Sample")
      .def(py::init([](std::string subject, std::string record, const Array& grid, double sbp, double dbp) {
             if (grid.ndim() != 2 || grid.shape(0) != grid.shape(1)) {
               throw Error(ErrorKind::Shape, "grid must be a square 2-D array");
             }
             return train::Sample{std::move(subject), std::move(record), from_numpy(grid), sbp, dbp};
           }),
           py::arg("subject_id"), py::arg("record_id"), py::arg("grid"), py::arg("sbp"), py::arg("dbp"))
      .def_readonly("subject_id", &train::Sample::subject_id)
      .def_readonly("record_id", &train::Sample::record_id)
      .def_readonly("sbp", &train::Sample::sbp)
      .def_readonly("dbp", &train::Sample::dbp);

  py::class_<train::PredictionRow>(m, "PredictionRow")
      .def_readonly("run", &train::PredictionRow::run)
      .def_readonly("fold", &train::PredictionRow::fold)
      .def_readonly("subject_id", &train::PredictionRow::subject_id)
      .def_readonly("record_id", &train::PredictionRow::record_id)
      .def_readonly("target", &train::PredictionRow::target)
      .def_readonly("prediction", &train::PredictionRow::prediction)
      .def_readonly("reference", &train::PredictionRow::reference);

  m.def("make_sample",
        [](const signal::CuffDeflationRecord& r, const signal::SignalConfig& s, const grid::GridConfig& g) {
          io::RunConfig c;
          c.signal = s;
          c.grid = g;
          c.model.grid_size = g.rows;
          return io::make_sample(r, c);
        },
        py::arg("record"), py::arg("signal_config") = signal::SignalConfig{},
        py::arg("grid_config") = grid::GridConfig{});
  m.def("run_experiment",
        [](const train::Dataset& data, const model::ModelConfig& mc, const train::TrainingConfig& tc,
           std::size_t n_runs) {
          py::gil_scoped_release release;
          return train::run_experiment(data, mc, tc, n_runs);
        },
        py::arg("samples"), py::arg("model_config"), py::arg("training_config"), py::arg("n_runs") = 1);

  // Evaluation

  m.def("error_stats", [](const std::vector<double>& e) { return stats_dict(eval::error_stats(e)); },
        py::arg("errors"));
  m.def("bhs_grade",
        [](const std::vector<double>& e) {
          const auto r = eval::bhs_grade(e);
          return py::make_tuple(std::string(1, eval::to_char(r.grade)), r.pct_within);
        },
        py::arg("errors"));
  m.def("grade_from_percentages",
        [](std::array<double, 3> p) { return std::string(1, eval::to_char(eval::grade_from_percentages(p))); },
        py::arg("percentages"));
  m.def("aami_check", &eval::aami_check, py::arg("me"), py::arg("sde"));
  m.def("bland_altman",
        [](const std::vector<double>& est, const std::vector<double>& ref) {
          const auto ba = eval::bland_altman(est, ref);
          py::dict d;
          d["bias"] = ba.bias;
          d["sd"] = ba.sd;
          d["lower"] = ba.lower;
          d["upper"] = ba.upper;
          std::vector<double> means, diffs;
          for (const auto& r : ba.rows) {
            means.push_back(r.mean);
            diffs.push_back(r.diff);
          }
          d["mean"] = to_numpy(means);
          d["diff"] = to_numpy(diffs);
          return d;
        },
        py::arg("estimates"), py::arg("references"));
  m.def("aggregate_runs",
        [](const std::vector<train::PredictionRow>& rows) {
          py::list out;
          for (const auto& r : eval::aggregate_runs(rows)) {
            py::dict d;
            d["target"] = model::to_string(r.target);
            d["me"] = r.me;
            d["mae"] = r.mae;
            d["sde"] = r.sde;
            d["pct_within"] = r.pct_within;
            d["grade"] = std::string(1, eval::to_char(r.grade));
            d["aami_pass"] = r.aami_pass;
            d["n"] = r.n;
            out.append(d);
          }
          return out;
        },
        py::arg("rows"));
}
