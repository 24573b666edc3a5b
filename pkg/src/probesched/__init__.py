"""Probe scheduling for silent failure detection."""
