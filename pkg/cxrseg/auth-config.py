{'config-search-paths': ['{:user-config-path}/cxrseg/config.yaml',],
 'auth-variables':
 {'data-path': {
     'default': None,
     'environment-variables': 'CXRSEG_DATA_PATH DATA_PATH'},
  'run-path': {
     'default': '{:user-data-path}/cxrseg/runs',
     'environment-variables': 'CXRSEG_RUN_PATH RUN_PATH'},
  'default-seed': {
      'default': 0,
      'environment-variables': 'CXRSEG_SEED'},
  'jobs': {
      'default': 1,
      'environment-variables': 'CXRSEG_JOBS'},}}
