#include <cstdio>
int main() { std::puts("tokswap: placeholder"); return 0; }
