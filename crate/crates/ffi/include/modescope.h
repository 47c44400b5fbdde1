#ifndef MODESCOPE_H
#define MODESCOPE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  MS_STATUS_OK = 0,
  MS_STATUS_NULL_ARGUMENT = 1,
  MS_STATUS_INVALID_UTF8 = 2,
  MS_STATUS_INVALID_INPUT = 3,
  MS_STATUS_IO = 4,
  MS_STATUS_MALFORMED_DATA = 5,
  MS_STATUS_MISSING_CAPABILITY = 6,
  MS_STATUS_NUMERICAL = 7,
  MS_STATUS_NETWORK = 8,
  MS_STATUS_REJECTED = 9,
  MS_STATUS_PROTOCOL = 10,
  MS_STATUS_SERIALIZATION = 11,
  MS_STATUS_BUFFER_TOO_SMALL = 12,
  MS_STATUS_PANIC = 13,
} MsStatus;

typedef enum {
  MS_RULE_NAIVE = 0,
  /**
   * Parameter is the clip epsilon.
   */
  MS_RULE_PPO_CLIP = 1,
  /**
   * Parameter is the penalty coefficient beta.
   */
  MS_RULE_KL_PENALTY = 2,
} MsRule;

/**
 * A loaded JSONL generation corpus.
 */
typedef struct MsCorpus MsCorpus;

/**
 * A sentiment lexicon, optionally with emoji descriptions.
 */
typedef struct MsLexicon MsLexicon;

/**
 * A bandit simulation trajectory.
 */
typedef struct MsTrajectory MsTrajectory;

typedef struct {
  double mean;
  double std;
  size_t included;
  size_t excluded;
} MsEntropySummary;

typedef struct {
  double compound;
  double pos;
  double neu;
  double neg;
} MsSentiment;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *ms_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *ms_version(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void ms_string_free(char *s);

/**
 * Shannon entropy in bits of a top-k probability vector.
 *
 * # Safety
 * `probs` must point to `len` readable doubles; `out` must be writable.
 */
MsStatus ms_top_k_entropy(const double *probs, size_t len, bool renormalize, double *out);

/**
 * Softmax of `logits / temperature`, written to `out_probs` in input order.
 *
 * # Safety
 * `logits` must point to `len` readable doubles and `out_probs` to `len`
 * writable doubles.
 */
MsStatus ms_softmax_with_temperature(const double *logits,
                                     size_t len,
                                     double temperature,
                                     double *out_probs);

/**
 * KL(p || q) in nats.
 *
 * # Safety
 * `p` and `q` must each point to `len` readable doubles; `out` must be writable.
 */
MsStatus ms_kl_divergence(const double *p, const double *q, size_t len, double *out);

double ms_ppo_clip_objective(double ratio, double advantage, double epsilon);

/**
 * Loads a JSONL corpus.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
MsStatus ms_corpus_load(const char *path, MsCorpus **out);

/**
 * Number of records, or 0 for a null handle.
 *
 * # Safety
 * `corpus` must be null or a live handle.
 */
size_t ms_corpus_len(const MsCorpus *corpus);

/**
 * Mean per-completion token entropy over records that carry logprobs.
 *
 * # Safety
 * `corpus` must be a live handle; `out` must be writable.
 */
MsStatus ms_corpus_entropy(const MsCorpus *corpus, bool renormalize, MsEntropySummary *out);

/**
 * # Safety
 * `corpus` must be null or a handle not yet freed.
 */
void ms_corpus_free(MsCorpus *corpus);

/**
 * Loads a tab-separated valence lexicon. `emoji_path` may be null.
 *
 * # Safety
 * Paths must be nul-terminated strings; `out` must be writable.
 */
MsStatus ms_lexicon_load(const char *lexicon_path, const char *emoji_path, MsLexicon **out);

/**
 * Scores one text.
 *
 * # Safety
 * `lexicon` must be a live handle, `text` a nul-terminated string and `out` writable.
 */
MsStatus ms_sentiment_score(const MsLexicon *lexicon, const char *text, MsSentiment *out);

/**
 * # Safety
 * `lexicon` must be null or a handle not yet freed.
 */
void ms_lexicon_free(MsLexicon *lexicon);

/**
 * Runs the chatbot-name bandit with the given rule. `param` is ignored for
 * the naive rule.
 *
 * # Safety
 * `out` must be writable.
 */
MsStatus ms_simulate(MsRule rule, double param, size_t steps, uint64_t seed, MsTrajectory **out);

/**
 * The scripted four-step walkthrough.
 *
 * # Safety
 * `out` must be writable.
 */
MsStatus ms_table1(MsTrajectory **out);

/**
 * Number of recorded steps, or 0 for a null handle.
 *
 * # Safety
 * `trajectory` must be null or a live handle.
 */
size_t ms_trajectory_len(const MsTrajectory *trajectory);

/**
 * Number of actions, or 0 for a null handle.
 *
 * # Safety
 * `trajectory` must be null or a live handle.
 */
size_t ms_trajectory_n_actions(const MsTrajectory *trajectory);

/**
 * Copies the policy after the last step into `buf`, in action order.
 *
 * # Safety
 * `trajectory` must be a live handle and `buf` must point to `len` writable doubles.
 */
MsStatus ms_trajectory_final_probs(const MsTrajectory *trajectory, double *buf, size_t len);

/**
 * Serializes the trajectory as JSON. Free the result with [`ms_string_free`].
 *
 * # Safety
 * `trajectory` must be a live handle; `out` must be writable.
 */
MsStatus ms_trajectory_to_json(const MsTrajectory *trajectory, char **out);

/**
 * # Safety
 * `trajectory` must be null or a handle not yet freed.
 */
void ms_trajectory_free(MsTrajectory *trajectory);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MODESCOPE_H */
