#ifndef STACK_H
#define STACK_H

#define STACK_CAP 16

typedef struct {
    int items[STACK_CAP];
    int size;
} Stack;

void stack_init(Stack *s);
int stack_push(Stack *s, int v);
int stack_pop(Stack *s);
int stack_peek(const Stack *s);
int stack_size(const Stack *s);
int stack_at(const Stack *s, int i);

#endif
