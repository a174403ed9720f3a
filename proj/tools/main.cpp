#include <string>
#include <vector>

#include "drumremap/cli.hpp"

int main(int argc, char** argv) { return drumremap::run(std::vector<std::string>(argv, argv + argc)); }
