#include "bridgestain/bridgestain.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "bridgestain/commands.hpp"
#include "bridgestain/error.hpp"
#include "bridgestain/evaluation.hpp"
#include "bridgestain/schedule.hpp"
#include "bridgestain/tensor_io.hpp"

struct bs_tensor {
  bridgestain::ImageTensor img;
};

struct bs_schedule {
  bridgestain::BridgeSchedule s;
};

namespace {

thread_local std::string last_error;

bs_status to_status(bridgestain::ErrorCode c) {
  using bridgestain::ErrorCode;
  switch (c) {
    case ErrorCode::invalid_input: return BS_INVALID_INPUT;
    case ErrorCode::invalid_config: return BS_INVALID_CONFIG;
    case ErrorCode::invalid_step: return BS_INVALID_STEP;
    case ErrorCode::empty_result: return BS_EMPTY_RESULT;
    case ErrorCode::incompatible_checkpoint: return BS_INCOMPATIBLE_CHECKPOINT;
    case ErrorCode::not_found: return BS_NOT_FOUND;
    case ErrorCode::io: return BS_IO;
  }
  return BS_INTERNAL;
}

template <typename F>
bs_status guard(F&& fn) {
  try {
    fn();
    last_error.clear();
    return BS_OK;
  } catch (const bridgestain::Error& e) {
    last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
  } catch (const std::exception& e) {
    last_error = e.what();
  } catch (...) {
    last_error = "unknown error";
  }
  return BS_INTERNAL;
}

bs_status null_arg(const char* what) {
  last_error = std::string("null argument: ") + what;
  return BS_INVALID_INPUT;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* bs_last_error(void) { return last_error.c_str(); }

const char* bs_status_name(bs_status status) {
  switch (status) {
    case BS_OK: return "ok";
    case BS_INVALID_INPUT: return "invalid-input";
    case BS_INVALID_CONFIG: return "invalid-config";
    case BS_INVALID_STEP: return "invalid-step";
    case BS_EMPTY_RESULT: return "empty-result";
    case BS_INCOMPATIBLE_CHECKPOINT: return "incompatible-checkpoint";
    case BS_NOT_FOUND: return "not-found";
    case BS_IO: return "io";
    case BS_INTERNAL: return "internal";
  }
  return "unknown";
}

int bs_status_exit_code(bs_status status) {
  switch (status) {
    case BS_OK: return 0;
    case BS_INVALID_INPUT:
    case BS_INVALID_CONFIG:
    case BS_INCOMPATIBLE_CHECKPOINT:
    case BS_NOT_FOUND: return 2;
    default: return 3;
  }
}

const char* bs_version(void) { return "1.0.0"; }

bs_status bs_tensor_create(int height, int width, int channels, int semantics, double range_lo,
                           double range_hi, const double* data, bs_tensor** out) {
  if (!out) return null_arg("out");
  return guard([&] {
    bridgestain::require(height > 0 && width > 0 && channels > 0, bridgestain::ErrorCode::invalid_input,
                         "tensor dimensions must be positive");
    bridgestain::require(semantics >= 0 && semantics <= 3, bridgestain::ErrorCode::invalid_input,
                         "unknown semantics tag");
    auto t = new bs_tensor{bridgestain::ImageTensor(height, width, channels,
                                                    static_cast<bridgestain::Semantics>(semantics),
                                                    {range_lo, range_hi})};
    if (data) std::memcpy(t->img.data().data(), data, t->img.size() * sizeof(double));
    *out = t;
  });
}

bs_status bs_tensor_load(const char* path, bs_tensor** out) {
  if (!path) return null_arg("path");
  if (!out) return null_arg("out");
  return guard([&] { *out = new bs_tensor{bridgestain::load_tensor(path)}; });
}

bs_status bs_tensor_save(const bs_tensor* t, const char* path) {
  if (!t) return null_arg("tensor");
  if (!path) return null_arg("path");
  return guard([&] { bridgestain::save_tensor(path, t->img); });
}

bs_status bs_tensor_save_png(const bs_tensor* t, const char* path) {
  if (!t) return null_arg("tensor");
  if (!path) return null_arg("path");
  return guard([&] { bridgestain::save_png(path, t->img); });
}

bs_status bs_tensor_shape(const bs_tensor* t, int* height, int* width, int* channels) {
  if (!t) return null_arg("tensor");
  if (height) *height = t->img.height();
  if (width) *width = t->img.width();
  if (channels) *channels = t->img.channels();
  return BS_OK;
}

const double* bs_tensor_data(const bs_tensor* t) { return t ? t->img.data().data() : nullptr; }

void bs_tensor_free(bs_tensor* t) { delete t; }

bs_status bs_schedule_create(int T, bs_schedule** out) {
  if (!out) return null_arg("out");
  return guard([&] { *out = new bs_schedule{bridgestain::build_schedule(T)}; });
}

bs_status bs_schedule_get(const bs_schedule* s, int t, double* m, double* delta,
                          double* delta_tilde, double* c_x, double* c_y, double* c_eps) {
  if (!s) return null_arg("schedule");
  return guard([&] {
    bridgestain::require(t >= 0 && t <= s->s.T, bridgestain::ErrorCode::invalid_step,
                         "step " + std::to_string(t) + " outside [0, " + std::to_string(s->s.T) + "]");
    if (m) *m = s->s.m[t];
    if (delta) *delta = s->s.delta[t];
    if (delta_tilde) *delta_tilde = s->s.delta_tilde[t];
    if (c_x) *c_x = s->s.c_x[t];
    if (c_y) *c_y = s->s.c_y[t];
    if (c_eps) *c_eps = s->s.c_eps[t];
  });
}

void bs_schedule_free(bs_schedule* s) { delete s; }

bs_status bs_ssim(const bs_tensor* a, const bs_tensor* b, int global, double* out) {
  if (!a || !b) return null_arg("tensor");
  if (!out) return null_arg("out");
  return guard([&] {
    bridgestain::SsimParams p;
    p.global = global != 0;
    *out = bridgestain::ssim(a->img, b->img, p);
  });
}

bs_status bs_mse_psnr(const bs_tensor* reference, const bs_tensor* other, double* mse,
                      double* psnr_db) {
  if (!reference || !other) return null_arg("tensor");
  return guard([&] {
    const auto r = bridgestain::mse_psnr(reference->img, other->img);
    if (mse) *mse = r.mse;
    if (psnr_db) *psnr_db = r.psnr_db;
  });
}

bs_status bs_paired_ttest(const double* a, const double* b, size_t n, double* t_score,
                          double* p_value) {
  if (!a || !b) return null_arg("scores");
  return guard([&] {
    const auto r = bridgestain::paired_ttest({a, n}, {b, n});
    if (t_score) *t_score = r.t_score;
    if (p_value) *p_value = r.p_value;
  });
}

bs_status bs_command_run(const char* name, const char* config_json, char** result_json) {
  if (!name) return null_arg("name");
  if (result_json) *result_json = nullptr;
  return guard([&] {
    const std::string res = bridgestain::run_command(name, config_json ? config_json : "");
    if (result_json) *result_json = dup_string(res);
  });
}

const char* bs_command_list(void) {
  static const std::string list = [] {
    std::string s;
    for (const auto& n : bridgestain::command_names()) s += n + "\n";
    return s;
  }();
  return list.c_str();
}

void bs_string_free(char* s) { std::free(s); }

}
