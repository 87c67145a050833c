"""Static APK triage: disassembly, tiered summarization, verdict tracing."""

__version__ = "0.1.0"
