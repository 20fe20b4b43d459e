#ifndef CHECK_H
#define CHECK_H

#include <stdio.h>
#include <stdlib.h>

#define assert_int_eq(actual, expected)                                              \
    do {                                                                             \
        long long a_ = (long long)(actual);                                          \
        long long e_ = (long long)(expected);                                        \
        if (a_ != e_) {                                                              \
            fprintf(stderr, "AssertionError: expected:<%lld> but was:<%lld>\n", e_, a_); \
            fprintf(stderr, "\tat %s(%s:%d)\n", __func__, __FILE__, __LINE__);       \
            exit(1);                                                                 \
        }                                                                            \
    } while (0)

#define assert_true(cond)                                                            \
    do {                                                                             \
        if (!(cond)) {                                                               \
            fprintf(stderr, "AssertionError: expected true: %s\n", #cond);           \
            fprintf(stderr, "\tat %s(%s:%d)\n", __func__, __FILE__, __LINE__);       \
            exit(1);                                                                 \
        }                                                                            \
    } while (0)

#endif
