"""Face anti-spoofing with error level analysis and a from-scratch CNN."""
