#include <string>
#include <vector>

#include "capanneal/io.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return capanneal::run_cli(args);
}
