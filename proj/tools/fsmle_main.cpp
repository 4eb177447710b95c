#include "fsmle/cli.hpp"

#include <string>
#include <vector>

int main(int argc, char** argv) { return fsmle::run_cli(std::vector<std::string>(argv, argv + argc)); }
