#include <iostream>
int main() { std::cout << "gridreg placeholder\n"; return 0; }
