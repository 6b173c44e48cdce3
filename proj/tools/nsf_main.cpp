#include <string>
#include <vector>

#include "nsf/cli.hpp"

int main(int argc, char** argv) { return nsf::run_cli(std::vector<std::string>(argv + 1, argv + argc)); }
