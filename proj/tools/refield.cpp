#include "refield/cli.hpp"

int main(int argc, char** argv)
{
    return refield::run_command(argc, argv);
}
