"""Test suite for spdc-calib."""
