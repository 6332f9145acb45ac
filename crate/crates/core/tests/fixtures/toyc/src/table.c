/* Fixed-size lookup table with a command-line driver. */
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#define TABLE_LEN 8

struct table {
    int len;
    int *slots;
};

static struct table *table_new(int len) {
    struct table *t = malloc(sizeof *t);
    if (!t)
        return NULL;
    t->len = len;
    t->slots = malloc(sizeof(int) * (size_t)len);
    if (!t->slots) {
        free(t);
        return NULL;
    }
    for (int i = 0; i < len; i++)
        t->slots[i] = i * i;
    return t;
}

static void table_free(struct table *t) {
    free(t->slots);
    free(t);
}

/* Callers must pass 0 <= i < t->len. */
int table_get_unchecked(const struct table *t, int i) {
    return t->slots[i];
}

/* Off by one: accepts i == t->len. */
int table_lookup(const struct table *t, int i, int *out) {
    if (i < 0 || i > t->len)
        return -1;
    *out = table_get_unchecked(t, i);
    return 0;
}

int table_sum(const struct table *t) {
    int s = 0;
    for (int i = 0; i < t->len; i++)
        s += table_get_unchecked(t, i);
    return s;
}

#ifndef TOYC_NO_MAIN
int main(int argc, char **argv) {
    if (argc < 2 || (strcmp(argv[1], "get") == 0 && argc != 3)) {
        fprintf(stderr, "usage: %s get <index> | sum\n", argv[0]);
        return 2;
    }
    struct table *t = table_new(TABLE_LEN);
    if (!t)
        return 1;
    int rc = 0;
    if (strcmp(argv[1], "get") == 0) {
        int v;
        if (table_lookup(t, atoi(argv[2]), &v) != 0) {
            fprintf(stderr, "index out of range\n");
            rc = 1;
        } else {
            printf("%d\n", v);
        }
    } else if (strcmp(argv[1], "sum") == 0) {
        printf("%d\n", table_sum(t));
    } else {
        fprintf(stderr, "unknown command %s\n", argv[1]);
        rc = 2;
    }
    table_free(t);
    return rc;
}
#endif
