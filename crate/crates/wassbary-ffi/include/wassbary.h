#ifndef WASSBARY_H
#define WASSBARY_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. */
#define WB_OK 0
#define WB_ERR_NULL 1      /* null argument or empty input list */
#define WB_ERR_PARSE 2     /* invalid JSON or invalid configuration */
#define WB_ERR_NUMERICAL 3 /* conditioning / domain failure during computation */
#define WB_ERR_UTF8 4      /* input string is not valid UTF-8 */

/* Opaque handle over a probability measure. */
typedef struct WbMeasure WbMeasure;

/* Message for the most recent error on this thread. The pointer stays valid
 * until the next failing call on the same thread. Never NULL. */
const char *wb_last_error_message(void);

/* Parses a measure from JSON (same schema as the CLI's measure files).
 * On WB_OK, *out holds a new handle; release it with wb_measure_free. */
int wb_measure_from_json(const char *json, WbMeasure **out);

/* Serializes a measure to JSON. Returns NULL on a null handle. Release the
 * returned string with wb_string_free. */
char *wb_measure_to_json(const WbMeasure *m);

void wb_measure_free(WbMeasure *m);
void wb_string_free(char *s);

/* 2-Wasserstein distance between measures of the same family. */
int wb_wasserstein2(const WbMeasure *a, const WbMeasure *b, double *out);

/* Barycenter of n measures. Pass tolerance <= 0, max_iters == 0, or tau < 0
 * to use the defaults (1e-6, 200, 1.0). On WB_OK, *out holds a new handle. */
int wb_barycenter(const WbMeasure *const *inputs, size_t n, double tolerance,
                  size_t max_iters, double tau, WbMeasure **out);

#ifdef __cplusplus
}
#endif

#endif /* WASSBARY_H */
