#include <stdio.h>
#include <stdlib.h>

#include "stack.h"

void stack_init(Stack *s) {
    s->size = 0;
}

int stack_push(Stack *s, int v) {
    if (s->size == STACK_CAP) {
        return -1;
    }
    s->items[s->size++] = v;
    return 0;
}

int stack_pop(Stack *s) {
    if (s->size == 0) {
        fprintf(stderr, "stack_pop: empty stack\n");
        abort();
    }
    return s->items[--s->size];
}

int stack_peek(const Stack *s) {
    if (s->size == 0) {
        fprintf(stderr, "stack_peek: empty stack\n");
        abort();
    }
    return s->items[s->size - 1];
}

int stack_size(const Stack *s) {
    return s->size;
}

int stack_at(const Stack *s, int i) {
    if (i < 0 || i >= s->size) {
        fprintf(stderr, "stack_at: index %d out of range\n", i);
        abort();
    }
    return s->items[i];
}
