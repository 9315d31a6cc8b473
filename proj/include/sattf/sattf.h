/* SPDX-License-Identifier: Apache-2.0 */
/* Copyright 2026 The sattf Authors */

#ifndef SATTF_SATTF_H
#define SATTF_SATTF_H

#ifdef __cplusplus
extern "C" {
#endif

#if defined(SATTF_BUILDING_LIBRARY)
#define SATTF_API __attribute__((visibility("default")))
#else
#define SATTF_API
#endif

#define SATTF_ABI_VERSION 1

typedef enum sattf_status {
  SATTF_OK = 0,
  SATTF_ERR_INVALID_ARGUMENT = 1,
  SATTF_ERR_PARSE = 2,
  SATTF_ERR_IO = 3,
  SATTF_ERR_COMPILE = 4,
  SATTF_ERR_EVAL = 5,
  SATTF_ERR_RUNTIME = 6,
  SATTF_ERR_INTERNAL = 7
} sattf_status;

/* Opaque compiled model. */
typedef struct sattf_model sattf_model;

SATTF_API int sattf_abi_version(void);

/* Message of the last failing call on this thread; empty when none. Owned by the library. */
SATTF_API const char* sattf_last_error(void);

/* Frees a string returned through an out-parameter. Accepts NULL. */
SATTF_API void sattf_string_free(char* s);

/* Compiles the SAT model. options_json keys (all optional except p):
   p, c, beta, context_len, float_width, nonsep_penalty, tie_break. */
SATTF_API sattf_status sattf_compile(const char* options_json, sattf_model** out);
SATTF_API sattf_status sattf_model_save(const sattf_model* m, const char* dir);
SATTF_API sattf_status sattf_model_load(const char* dir, sattf_model** out);
SATTF_API void sattf_model_free(sattf_model* m);
SATTF_API sattf_status sattf_model_info_json(const sattf_model* m, char** out_json);

/* Greedy decoding on a DIMACS formula; budget <= 0 selects the default. */
SATTF_API sattf_status sattf_solve(const sattf_model* m, const char* dimacs_text, long budget, char** out_json);

/* Dataset generation. spec_json keys: distribution, p, count, seed, ratio_min, ratio_max,
   skew_bias_min, skew_bias_max, skew_power. threads <= 0 selects the default. Output is JSONL. */
SATTF_API sattf_status sattf_generate(const char* spec_json, int threads, char** out_jsonl);

/* Evaluates a JSONL dataset. options_json keys: budget, threads. The report JSON carries
   a human-readable "table" field. */
SATTF_API sattf_status sattf_evaluate(const sattf_model* m, const char* dataset_jsonl, const char* options_json,
                                      char** out_report_json);

/* Accuracy per (p, beta) on generated marginal data. options_json keys: p (array),
   beta (array), count, seed, threads. */
SATTF_API sattf_status sattf_sweep_beta(const char* options_json, char** out_report_json);

/* Abstract DPLL oracle on a DIMACS formula with chooser "mirror" or "lowest" (NULL: mirror). */
SATTF_API sattf_status sattf_oracle(const char* dimacs_text, int num_vars, const char* chooser, char** out_json);

/* Validates a generated trace against a prompt, both as whitespace-separated tokens. */
SATTF_API sattf_status sattf_check_trace(int num_vars, const char* prompt_text, const char* trace_text, char** out_json);

#ifdef __cplusplus
}
#endif

#endif /* SATTF_SATTF_H */
