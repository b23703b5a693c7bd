#ifndef ELITIST_H
#define ELITIST_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EltStatus {
  ELT_STATUS_OK = 0,
  ELT_STATUS_NULL_POINTER = 1,
  ELT_STATUS_INVALID_ARGUMENT = 2,
  ELT_STATUS_IO = 3,
  ELT_STATUS_DATA = 4,
  ELT_STATUS_NUMERICAL = 5,
  ELT_STATUS_PANIC = 6,
} EltStatus;

// Loaded annotated corpus.
typedef struct EltCorpus EltCorpus;

// Loaded acoustic models.
typedef struct EltModelSet EltModelSet;

// Result of a training loop run.
typedef struct EltTrace EltTrace;

typedef struct EltCounts {
  uint64_t ok;
  uint64_t ins;
  uint64_t sub;
  uint64_t omi;
} EltCounts;

typedef struct EltIterationRecord {
  uint64_t index;
  double accuracy_all;
  double accuracy_subset;
  double retained_all;
  double retained_subset;
  uint64_t relabeled;
  struct EltCounts counts_all;
  struct EltCounts counts_subset;
} EltIterationRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null after a
// success. Valid until the next call on this thread.
const char *elt_last_error(void);

// Library version as a static string.
const char *elt_version(void);

// # Safety
// `s` must be null or a string returned by this library.
void elt_string_free(char *s);

// # Safety
// `path` must be a nul-terminated string and `out` writable.
enum EltStatus elt_model_set_load(const char *path, struct EltModelSet **out);

// # Safety
// `models` and `path` must be valid.
enum EltStatus elt_model_set_save(const struct EltModelSet *models, const char *path);

// # Safety
// `models` must be valid and `out` writable.
enum EltStatus elt_model_set_len(const struct EltModelSet *models, size_t *out);

// # Safety
// `models` must be null or a handle from this library, freed once.
void elt_model_set_free(struct EltModelSet *models);

// Loads a corpus manifest with the default context map.
//
// # Safety
// `manifest` must be a nul-terminated string and `out` writable.
enum EltStatus elt_corpus_load(const char *manifest, struct EltCorpus **out);

// New corpus with context-bearing consonants annotated by their successor.
//
// # Safety
// `corpus` must be valid and `out` writable.
enum EltStatus elt_corpus_contextualize(const struct EltCorpus *corpus, struct EltCorpus **out);

// # Safety
// `corpus` must be valid and `out` writable.
enum EltStatus elt_corpus_token_count(const struct EltCorpus *corpus, size_t *out);

// # Safety
// `corpus` must be valid and `out` writable.
enum EltStatus elt_corpus_effective_label_count(const struct EltCorpus *corpus, size_t *out);

// # Safety
// `corpus` must be null or a handle from this library, freed once.
void elt_corpus_free(struct EltCorpus *corpus);

// Decodes every utterance with a phone loop over `models`. Writes one JSON
// hypothesis per line to `*out_jsonl`.
//
// # Safety
// Handles must be valid and `out_jsonl` writable.
enum EltStatus elt_decode(const struct EltModelSet *models,
                          const struct EltCorpus *corpus,
                          double insertion_penalty,
                          char **out_jsonl);

// Minimum-edit alignment of two label sequences. `class_equivalence`
// nonzero ignores context classes when matching.
//
// # Safety
// Each array must hold the given number of nul-terminated strings.
enum EltStatus elt_align_counts(const char *const *reference,
                                size_t reference_len,
                                const char *const *hypothesis,
                                size_t hypothesis_len,
                                int32_t class_equivalence,
                                struct EltCounts *out);

// (Ok - Ins) / (Ok + Sub + Omi).
//
// # Safety
// `out` must be writable.
enum EltStatus elt_accuracy(struct EltCounts counts, double *out);

// Pooled two-proportion z-test; two-sided p-value.
//
// # Safety
// `z` and `p_value` must be writable.
enum EltStatus elt_two_proportion_test(uint64_t ok1,
                                       uint64_t n1,
                                       uint64_t ok2,
                                       uint64_t n2,
                                       double *z,
                                       double *p_value);

// Runs the training loop. `config_toml` may be null for defaults.
//
// # Safety
// `corpus` must be valid, `config_toml` null or nul-terminated, `out`
// writable.
enum EltStatus elt_run_elitist(const struct EltCorpus *corpus,
                               const char *config_toml,
                               struct EltTrace **out);

// # Safety
// `trace` must be valid and `out` writable.
enum EltStatus elt_trace_len(const struct EltTrace *trace, size_t *out);

// # Safety
// `trace` must be valid and `out` writable.
enum EltStatus elt_trace_record(const struct EltTrace *trace,
                                size_t index,
                                struct EltIterationRecord *out);

// # Safety
// `trace` must be valid and `out_csv` writable.
enum EltStatus elt_trace_csv(const struct EltTrace *trace, char **out_csv);

// Models after the last retraining, as a new handle.
//
// # Safety
// `trace` must be valid and `out` writable.
enum EltStatus elt_trace_final_models(const struct EltTrace *trace, struct EltModelSet **out);

// # Safety
// `trace` must be null or a handle from this library, freed once.
void elt_trace_free(struct EltTrace *trace);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ELITIST_H */
