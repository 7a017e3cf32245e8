#include <iostream>

int main() {
  std::cout << "harmnet: subcommands not wired yet\n";
  return 1;
}
