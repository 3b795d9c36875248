"""memobility テストスイート"""
