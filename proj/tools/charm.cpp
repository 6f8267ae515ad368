#include <string>
#include <vector>

#include "charm/cli.hpp"

int main(int argc, char** argv) { return charm::cli::run(std::vector<std::string>(argv + 1, argv + argc)); }
