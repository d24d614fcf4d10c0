/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_decoded_free: (a: number, b: number) => void;
export const __wbg_filterresponse_free: (a: number, b: number) => void;
export const __wbg_matrix_free: (a: number, b: number) => void;
export const decode_noisy: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint) => [number, number, number];
export const decoded_greedy: (a: number) => [number, number];
export const decoded_objective: (a: number) => number;
export const decoded_transcript: (a: number) => [number, number];
export const filterresponse_bin_hz: (a: number) => number;
export const filterresponse_center_hz: (a: number) => number;
export const filterresponse_spectrum: (a: number) => [number, number];
export const gabor_response: (a: number, b: number) => [number, number, number];
export const matrix_cols: (a: number) => number;
export const matrix_data: (a: number) => [number, number];
export const matrix_rows: (a: number) => number;
export const mel_features: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
