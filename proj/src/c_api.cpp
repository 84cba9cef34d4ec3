// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmq/dmq.h"

#include <cstring>
#include <iostream>
#include <new>
#include <sstream>
#include <string>

#include "dmq/checkpoint.hpp"
#include "dmq/commands.hpp"
#include "dmq/config.hpp"
#include "dmq/diffusion.hpp"
#include "dmq/error.hpp"
#include "dmq/metrics.hpp"
#include "dmq/quantizer.hpp"
#include "dmq/version.hpp"

struct dmq_config {
  nlohmann::ordered_json doc = dmq::config_to_json(dmq::ExperimentConfig{});
};

struct dmq_model {
  dmq::Checkpoint ckpt;
};

namespace {

thread_local std::string g_last_error;

dmq_status fail(dmq_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <typename Fn>
dmq_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return DMQ_OK;
  } catch (const dmq::Error& e) {
    return fail(static_cast<dmq_status>(static_cast<int>(e.kind())), e.what());
  } catch (const std::bad_alloc&) {
    return fail(DMQ_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(DMQ_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(DMQ_ERR_INTERNAL, "unknown error");
  }
}

#define DMQ_REQUIRE(cond, what) \
  if (!(cond)) return fail(DMQ_ERR_ARGUMENT, what)

// Adapts a dmq_write_fn to a std::ostream.
class CallbackBuf final : public std::stringbuf {
 public:
  CallbackBuf(dmq_write_fn fn, void* user) : fn_(fn), user_(user) {}
  int sync() override {
    const std::string s = str();
    if (!s.empty()) fn_(s.data(), s.size(), user_);
    str("");
    return 0;
  }

 private:
  dmq_write_fn fn_;
  void* user_;
};

}  // namespace

extern "C" {

const char* dmq_version(void) { return dmq::kVersion; }

const char* dmq_last_error(void) { return g_last_error.c_str(); }

const char* dmq_status_name(dmq_status status) {
  switch (status) {
    case DMQ_OK: return "ok";
    case DMQ_ERR_ARGUMENT: return "argument error";
    case DMQ_ERR_CONFIG: return "config error";
    case DMQ_ERR_DATA: return "data error";
    case DMQ_ERR_NUMERIC_DIVERGENCE: return "numeric divergence";
    case DMQ_ERR_GENERATOR: return "generator error";
    case DMQ_ERR_STATE: return "state error";
    case DMQ_ERR_CALIBRATION_COVERAGE: return "calibration coverage error";
    case DMQ_ERR_DEGENERATE_PROFILE: return "degenerate profile";
    case DMQ_ERR_INSUFFICIENT_DATA: return "insufficient data";
    case DMQ_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

dmq_status dmq_config_create(dmq_config** out) {
  DMQ_REQUIRE(out, "out must not be NULL");
  return guarded([&] { *out = new dmq_config; });
}

void dmq_config_destroy(dmq_config* cfg) { delete cfg; }

dmq_status dmq_config_load_file(dmq_config* cfg, const char* path) {
  DMQ_REQUIRE(cfg && path, "cfg and path must not be NULL");
  return guarded([&] {
    const nlohmann::ordered_json file = dmq::load_config_json(path);
    dmq::merge_config(cfg->doc, file);
  });
}

dmq_status dmq_config_set(dmq_config* cfg, const char* assignment) {
  DMQ_REQUIRE(cfg && assignment, "cfg and assignment must not be NULL");
  return guarded([&] { dmq::apply_config_override(cfg->doc, assignment); });
}

dmq_status dmq_config_dump(const dmq_config* cfg, char* buf, size_t cap, size_t* needed) {
  DMQ_REQUIRE(cfg, "cfg must not be NULL");
  return guarded([&] {
    const std::string s =
        dmq::config_to_json(dmq::config_from_json(cfg->doc)).dump(2) + "\n";
    if (needed) *needed = s.size() + 1;
    if (buf && cap > 0) {
      const size_t n = std::min(cap - 1, s.size());
      std::memcpy(buf, s.data(), n);
      buf[n] = '\0';
    }
  });
}

dmq_status dmq_config_hash(const dmq_config* cfg, char* buf, size_t cap) {
  DMQ_REQUIRE(cfg && buf && cap >= 17, "need cfg and a buffer of at least 17 bytes");
  return guarded([&] {
    const std::string h = dmq::config_hash(dmq::config_from_json(cfg->doc));
    std::memcpy(buf, h.c_str(), h.size() + 1);
  });
}

dmq_status dmq_run_command(const dmq_config* cfg, const char* command, dmq_write_fn write,
                           void* user) {
  DMQ_REQUIRE(cfg && command, "cfg and command must not be NULL");
  return guarded([&] {
    const dmq::ExperimentConfig c = dmq::config_from_json(cfg->doc);
    if (write == nullptr) {
      dmq::run_command(command, c, std::cout);
      std::cout.flush();
      return;
    }
    CallbackBuf buf(write, user);
    std::ostream os(&buf);
    try {
      dmq::run_command(command, c, os);
    } catch (...) {
      os.flush();
      throw;
    }
    os.flush();
  });
}

dmq_status dmq_model_load(const char* path, dmq_model** out) {
  DMQ_REQUIRE(path && out, "path and out must not be NULL");
  return guarded([&] { *out = new dmq_model{dmq::load_checkpoint(path)}; });
}

void dmq_model_destroy(dmq_model* model) { delete model; }

dmq_status dmq_model_info(const dmq_model* model, size_t* num_layers, size_t* param_count,
                          int* timesteps) {
  DMQ_REQUIRE(model, "model must not be NULL");
  if (num_layers) *num_layers = model->ckpt.model.num_layers();
  if (param_count) *param_count = model->ckpt.model.param_count();
  if (timesteps) *timesteps = model->ckpt.schedule.T();
  return DMQ_OK;
}

dmq_status dmq_model_generate(const dmq_model* model, const char* caption, size_t n,
                              uint64_t seed, double* out) {
  DMQ_REQUIRE(model && caption && (out || n == 0), "model, caption and out must not be NULL");
  return guarded([&] {
    const auto& m = model->ckpt.model;
    const auto cond = dmq::embed_condition(caption, dmq::AspectSet::defaults(), m.cond_embed_dim());
    dmq::RngStream rng(seed, 0);
    const dmq::Tensor2D x = dmq::generate(m, cond, model->ckpt.schedule, n, rng);
    std::copy(x.values().begin(), x.values().end(), out);
  });
}

dmq_status dmq_model_size(const dmq_model* model, const char* policy, int preserve_sensitive,
                          int include_overhead, uint64_t* full_bytes, uint64_t* quantized_bytes,
                          double* reduction_pct) {
  DMQ_REQUIRE(model && policy, "model and policy must not be NULL");
  return guarded([&] {
    const auto& m = model->ckpt.model;
    const auto p = preserve_sensitive ? dmq::PrecisionPolicy::sensitive_preserved(m, policy)
                                      : dmq::PrecisionPolicy::uniform(m, policy);
    const dmq::SizeReport r = dmq::model_size_bytes(m, p, include_overhead != 0);
    if (full_bytes) *full_bytes = r.full_bytes;
    if (quantized_bytes) *quantized_bytes = r.quantized_bytes;
    if (reduction_pct) *reduction_pct = r.reduction_pct;
  });
}

dmq_status dmq_fake_quantize(double* values, size_t n, int bitwidth, int symmetric,
                             double* scale, int32_t* zero_point) {
  DMQ_REQUIRE(values || n == 0, "values must not be NULL");
  return guarded([&] {
    std::span<double> v(values, n);
    const auto p = dmq::fit_params(
        v, bitwidth, symmetric ? dmq::QuantMode::kSymmetric : dmq::QuantMode::kAsymmetric);
    dmq::fake_quantize_inplace(v, p);
    if (scale) *scale = p.scale;
    if (zero_point) *zero_point = p.zero_point;
  });
}

dmq_status dmq_frechet_distance(const double* mu_a, const double* sigma_a, const double* mu_b,
                                const double* sigma_b, size_t d, double* out) {
  DMQ_REQUIRE(mu_a && sigma_a && mu_b && sigma_b && out && d > 0,
              "all pointers must be non-NULL and d > 0");
  return guarded([&] {
    auto fit = [d](const double* mu, const double* sigma) {
      return dmq::make_gaussian_fit(std::vector<double>(mu, mu + d),
                                    dmq::Tensor2D(d, d, std::vector<double>(sigma, sigma + d * d)));
    };
    *out = dmq::frechet_distance(fit(mu_a, sigma_a), fit(mu_b, sigma_b));
  });
}

dmq_status dmq_coverage_vector(const char* text, char* buf, size_t cap) {
  DMQ_REQUIRE(text && buf, "text and buf must not be NULL");
  return guarded([&] {
    const std::string bits =
        dmq::compute_coverage_vector(text, dmq::AspectSet::defaults()).to_string();
    if (cap <= bits.size()) throw dmq::ArgumentError("coverage buffer too small");
    std::memcpy(buf, bits.c_str(), bits.size() + 1);
  });
}

}  // extern "C"
