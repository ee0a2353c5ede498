/* C interface to the neologism toolkit. Every function returns a neo_status;
 * on failure neo_last_error() describes the problem for the calling thread.
 * Strings returned through char** are owned by the caller and released with
 * neo_free_string. */
#ifndef NEO_NEO_H
#define NEO_NEO_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define NEO_API __declspec(dllexport)
#else
#define NEO_API __attribute__((visibility("default")))
#endif

typedef enum neo_status {
  NEO_OK = 0,
  NEO_ERR_INVALID_ARGUMENT = 1,
  NEO_ERR_IO = 2,
  NEO_ERR_FORMAT = 3,
  NEO_ERR_VOCABULARY = 4,
  NEO_ERR_NUMERIC = 5,
  NEO_ERR_INVARIANT = 6, /* a hard invariant check failed */
  NEO_ERR_INTERNAL = 7
} neo_status;

NEO_API const char* neo_version(void);
/* Message for the most recent failing call on this thread; "" if none. */
NEO_API const char* neo_last_error(void);
NEO_API void neo_free_string(char* s);

/* ---- command options -------------------------------------------------- */

typedef struct neo_options neo_options;

NEO_API neo_status neo_options_create(neo_options** out);
NEO_API void neo_options_destroy(neo_options* opts);
/* Keys: checkpoint, registry, dataset, config, out, kind, surface, prompt,
 * seed, max_tokens, temperature, greedy. */
NEO_API neo_status neo_options_set(neo_options* opts, const char* key, const char* value);

/* command: pretrain, dataset, teach, eval, gen. On NEO_OK or
 * NEO_ERR_INVARIANT, *summary (if non-null) receives a human-readable
 * summary. */
NEO_API neo_status neo_run(const char* command, const neo_options* opts, char** summary);

/* ---- prompting sessions ----------------------------------------------- */

typedef struct neo_session neo_session;

typedef struct neo_sample_options {
  int max_tokens;
  double temperature;
  int greedy;
  uint64_t seed;
} neo_sample_options;

NEO_API neo_sample_options neo_sample_defaults(void);

/* registry may be NULL for the default location next to the checkpoint. */
NEO_API neo_status neo_session_open(const char* checkpoint, const char* registry, uint64_t seed,
                                    neo_session** out);
NEO_API void neo_session_close(neo_session* session);

NEO_API neo_status neo_session_generate(neo_session* session, const char* prompt,
                                        const neo_sample_options* options, char** text);
NEO_API neo_status neo_session_logprob(neo_session* session, const char* prompt,
                                       const char* response, double* out);
NEO_API neo_status neo_session_vocab(neo_session* session, int* base_size, int* total_size);
/* Next-token probabilities after the chat-formatted prompt, written to
 * probs[0 .. total_size); neologism entries are always 0. */
NEO_API neo_status neo_session_next_probs(neo_session* session, const char* prompt, double* probs,
                                          int capacity);
/* One REPL line. *quit is set to 1 for ":quit". */
NEO_API neo_status neo_session_repl_line(neo_session* session, const char* line, char** reply,
                                         int* quit);

#ifdef __cplusplus
}
#endif

#endif /* NEO_NEO_H */
