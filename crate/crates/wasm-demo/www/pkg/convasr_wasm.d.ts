/* tslint:disable */
/* eslint-disable */

export class Decoded {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Frame-wise argmax letters before the lexicon and LM are applied.
     */
    readonly greedy: string;
    readonly objective: number;
    readonly transcript: string;
}

/**
 * Power spectrum of a Gabor filter, plus where the center-frequency estimate lands.
 */
export class FilterResponse {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly bin_hz: number;
    readonly center_hz: number;
    readonly spectrum: Float64Array;
}

/**
 * A `channels × frames` matrix, row-major.
 */
export class Matrix {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    readonly cols: number;
    readonly data: Float64Array;
    readonly rows: number;
}

/**
 * Builds noisy emissions for `text` (four frames per letter, two per
 * silence) and decodes them against the synthetic lexicon and a trigram LM
 * estimated from the synthetic grammar.
 */
export function decode_noisy(text: string, noise: number, alpha: number, beta: number, gamma: number, seed: bigint): Decoded;

/**
 * A 25 ms complex Gabor kernel tuned to `freq_hz` with a Gaussian envelope of
 * standard deviation `sigma_ms`.
 */
export function gabor_response(freq_hz: number, sigma_ms: number): FilterResponse;

/**
 * Synthesizes `text` (letters a to e) and returns its normalized log-mel features.
 * `snr_db` below 100 adds white noise at that SNR.
 */
export function mel_features(text: string, snr_db: number, n_mels: number, seed: bigint): Matrix;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_decoded_free: (a: number, b: number) => void;
    readonly __wbg_filterresponse_free: (a: number, b: number) => void;
    readonly __wbg_matrix_free: (a: number, b: number) => void;
    readonly decode_noisy: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint) => [number, number, number];
    readonly decoded_greedy: (a: number) => [number, number];
    readonly decoded_objective: (a: number) => number;
    readonly decoded_transcript: (a: number) => [number, number];
    readonly filterresponse_bin_hz: (a: number) => number;
    readonly filterresponse_center_hz: (a: number) => number;
    readonly filterresponse_spectrum: (a: number) => [number, number];
    readonly gabor_response: (a: number, b: number) => [number, number, number];
    readonly matrix_cols: (a: number) => number;
    readonly matrix_data: (a: number) => [number, number];
    readonly matrix_rows: (a: number) => number;
    readonly mel_features: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
