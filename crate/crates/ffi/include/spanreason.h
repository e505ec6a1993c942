#ifndef SPANREASON_H
#define SPANREASON_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Profile selector for [`sr_groups_build`].
#define SR_PROFILE_TEXT 0

#define SR_PROFILE_HYBRID 1

// Bits for the `flags` argument of [`sr_generate_jsonl`].
#define SR_GEN_NO_MLM 1

#define SR_GEN_NO_UNANSWERABLE 2

#define SR_GEN_SINGLE_EVIDENCE 4

// Result code of every exported function.
typedef enum SrStatus {
  SR_STATUS_OK = 0,
  SR_STATUS_NULL_ARGUMENT = 1,
  SR_STATUS_INVALID_UTF8 = 2,
  SR_STATUS_INVALID_ARGUMENT = 3,
  SR_STATUS_IO = 4,
  SR_STATUS_CORPUS = 5,
  SR_STATUS_GENERATION = 6,
  SR_STATUS_BUFFER_TOO_SMALL = 7,
  SR_STATUS_PANIC = 8,
} SrStatus;

// An ingested corpus with its vocabulary.
typedef struct SrCorpus SrCorpus;

// Query groups built from one corpus under one profile.
typedef struct SrGroups SrGroups;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next call into the library on the same thread.
const char *sr_last_error(void);

// Releases a string returned by the library. Null is ignored.
//
// # Safety
// `s` must come from this library and not be freed twice.
void sr_string_free(char *s);

// Ingests a corpus given as JSONL text.
//
// # Safety
// `jsonl` must be a NUL-terminated string; `out` must be writable.
enum SrStatus sr_corpus_from_jsonl(const char *jsonl, struct SrCorpus **out);

// Ingests a corpus from a JSONL file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum SrStatus sr_corpus_from_file(const char *path, struct SrCorpus **out);

// # Safety
// `corpus` must come from `sr_corpus_from_*` and not be freed twice.
void sr_corpus_free(struct SrCorpus *corpus);

// Page, sentence, table and vocabulary counts. Any output may be null.
//
// # Safety
// `corpus` must be a live handle.
enum SrStatus sr_corpus_counts(const struct SrCorpus *corpus,
                               uintptr_t *pages,
                               uintptr_t *sentences,
                               uintptr_t *tables,
                               uintptr_t *vocab);

// Builds the pair index and the query groups for `profile`.
//
// # Safety
// `corpus` must be a live handle; `out` must be writable.
enum SrStatus sr_groups_build(const struct SrCorpus *corpus,
                              uint32_t profile,
                              struct SrGroups **out);

// # Safety
// `groups` must be a live handle.
enum SrStatus sr_groups_len(const struct SrGroups *groups, uintptr_t *len);

// # Safety
// `groups` must come from `sr_groups_build` and not be freed twice.
void sr_groups_free(struct SrGroups *groups);

// Generates one example per viable group and returns them as JSONL, one
// example per line. `flags` is a bitwise or of `SR_GEN_*`.
//
// # Safety
// Handles must be live and built from the same corpus; `out` must be writable.
enum SrStatus sr_generate_jsonl(const struct SrCorpus *corpus,
                                const struct SrGroups *groups,
                                uint64_t seed,
                                uint32_t flags,
                                char **out);

// Answer normalization used by the metrics.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum SrStatus sr_normalize_answer(const char *text, char **out);

// Max EM and F1 of `prediction` over `n_golds` gold answers. A null
// prediction means no answer.
//
// # Safety
// `golds` must point to `n_golds` NUL-terminated strings.
enum SrStatus sr_em_f1(const char *prediction,
                       const char *const *golds,
                       uintptr_t n_golds,
                       double *em,
                       double *f1);

// Ranks spans over the `n` domain positions (entry 0 is CLS) and writes
// up to `capacity` best spans. `n_out` receives the number written.
//
// # Safety
// Input arrays must hold `n` elements; output arrays `capacity` elements.
enum SrStatus sr_rank_spans(const double *f_start,
                            const double *f_end,
                            const uintptr_t *positions,
                            uintptr_t n,
                            uintptr_t max_len,
                            uintptr_t *starts,
                            uintptr_t *ends,
                            double *scores,
                            uintptr_t capacity,
                            uintptr_t *n_out);

// Splits `n_tokens` into sliding windows as half-open `[start, end)`
// ranges. When `capacity` is too small, `n_out` receives the required
// count and `SR_STATUS_BUFFER_TOO_SMALL` is returned.
//
// # Safety
// Output arrays must hold `capacity` elements.
enum SrStatus sr_window_split(uintptr_t n_tokens,
                              uintptr_t window,
                              uintptr_t stride,
                              uintptr_t *starts,
                              uintptr_t *ends,
                              uintptr_t capacity,
                              uintptr_t *n_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPANREASON_H */
