#pragma once

// Recovery programs exercising every construct of the language. Shared by
// the unit tests and the acceptance binary.

#include "vf/vf.hpp"

#include <string>
#include <vector>

namespace vf::testing
{
    inline std::vector<std::string> rl_corpus()
    {
        return {
            "IF [ -FAULTY THREAD1 ] THEN KILL THREAD1 FI",
            "IF [ -FAULTY THREAD2 ] THEN RESTART THREAD2 FI",
            "IF [ -FAULTY THREAD3 ] THEN START THREAD4 FI",
            "IF [ -FAULTY THREAD2 ] THEN REBOOT NODE2 FI",
            "IF [ -FAULTY THREAD5 ] THEN SHUTDOWN NODE5 FI",
            "IF [ -FAULTY THREAD1 ] THEN PURGE FI",
            "IF [ -FAULTY THREAD1 ] THEN PURGE THREAD1 FI",
            "IF [ -FAULTY THREAD1 ] THEN WARN THREAD2, THREAD3, THREAD4 FI",
            "IF [ -FAULTY THREAD1 ] THEN WARN GROUP3 FI",
            "DEFAULT PURGE FI",
            "INCLUDE \"vf_phases.h\"\nIF [ -PHASE THREAD1 == {VFP_FAILURE} ] THEN KILL THREAD1 FI",
            "INCLUDE \"vf_phases.h\"\nIF [ -PHASE THREAD2 == {VFP_INIT} ] THEN START THREAD2 FI",
            "IF [ -PHASE THREAD2 == 3 ] THEN WARN THREAD1 FI",
            "IF [ -PHASE THREAD7 == 0 AND -FAULTY THREAD8 ] THEN WARN THREAD1 FI",
            "IF [ NOT -FAULTY THREAD1 ] THEN PURGE FI",
            "IF [ NOT NOT -FAULTY THREAD1 ] THEN KILL THREAD1 FI",
            "IF [ -FAULTY THREAD1 AND -FAULTY THREAD2 ] THEN KILL THREAD1 AND KILL THREAD2 FI",
            "IF [ -FAULTY THREAD1 OR -FAULTY THREAD2 OR -FAULTY THREAD3 ] THEN PURGE FI",
            "IF [ (-FAULTY THREAD1 OR -FAULTY THREAD2) AND -FAULTY THREAD3 ] THEN KILL THREAD3 FI",
            "IF [ -FAULTY THREAD1 OR -FAULTY THREAD2 AND -FAULTY THREAD3 ] THEN KILL THREAD3 FI",
            "IF [ NOT (-FAULTY THREAD1 AND -FAULTY THREAD2) ] THEN WARN THREAD1, THREAD2 FI",
            "IF [ -FAULTY THREAD1 AND (-FAULTY THREAD2 AND -FAULTY THREAD3) ] THEN PURGE FI",
            "IF [ -FAULTY GROUP1 ] THEN KILL THREAD@ FI",
            "IF [ -FAULTY GROUP1 ] THEN KILL THREAD@ AND WARN THREAD~ FI",
            "INCLUDE \"vf_phases.h\"\nIF [ -PHASE GROUP2 == {VFP_FAILURE} ] THEN RESTART THREAD@ FI",
            "INCLUDE \"vf_phases.h\"\nIF [ -FAULTY GROUP1 AND NOT -PHASE GROUP1 == {VFP_SUCCESS} ] THEN KILL THREAD@ FI",
            "IF [ -FAULTY THREAD1 ] THEN KILL THREAD1 FI\nIF [ -FAULTY THREAD2 ] THEN KILL THREAD2 FI",
            "IF [ -FAULTY THREAD1 ] THEN KILL THREAD1 FI\nDEFAULT PURGE FI",
            "DEFAULT WARN THREAD1 AND PURGE FI\nIF [ -FAULTY THREAD9 ] THEN KILL THREAD9 FI",
            "// comment line\nIF [ -FAULTY THREAD1 ] /* inline */ THEN KILL THREAD1 FI",
            "IF [ -FAULTY THREAD1 ] THEN\n  KILL THREAD1\n  START THREAD2\n  WARN THREAD3\nFI",
            "IF [ -FAULTY THREAD4294967295 ] THEN KILL THREAD4294967295 FI",
            "INCLUDE \"vf_phases.h\"\nIF [ -FAULTY THREAD1\n   OR -PHASE THREAD1 == {VFP_FAILURE} ]\n"
            "THEN\n    KILL THREAD1\n    START THREAD4 AND\n       WARN THREAD2, THREAD3\nFI",
            "INCLUDE \"vf_phases.h\"\nIF [ -FAULTY GROUP1\n   OR -PHASE GROUP1 == {VFP_FAILURE} ]\n"
            "THEN\n    KILL THREAD@ AND WARN THREAD~\nFI",
            "IF [ -FAULTY THREAD1 OR -FAULTY THREAD2 ] THEN REBOOT NODE1 AND RESTART THREAD2 FI",
            "IF [ -FAULTY THREAD1 ] THEN WARN GROUP1, THREAD7 FI",
        };
    }
} // namespace vf::testing
