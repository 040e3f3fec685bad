"""Time stepping: structure sub-step, ALE fluid sub-step and their coupling."""
