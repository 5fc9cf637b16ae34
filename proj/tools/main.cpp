#include <iostream>
#include <string>
#include <vector>

#include "msa/cli/cli.hpp"

int main(int argc, char** argv)
{
    return msa::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
