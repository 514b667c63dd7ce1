/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * RGBA8 pixels of `view` for the current frame, tonemapped. See [`VIEWS`].
     */
    image(view: string): Uint8Array;
    /**
     * `width` and `height` must be even.
     */
    constructor(scene: string, width: number, height: number, seed: bigint);
    static scenes(): string[];
    /**
     * Render the next frame at one path per 2×2 tile and fold it into the reconstruction.
     * Wraps to frame 0 after the last frame. Returns the new frame index.
     */
    step(): number;
    static views(): string[];
    /**
     * History weight of the temporal blend. Takes effect from the next frame; history restarts.
     */
    alpha: number;
    /**
     * Index of the frame on display, if any.
     */
    readonly frame: number | undefined;
    readonly frames: number;
    readonly height: number;
    readonly width: number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_alpha: (a: number) => number;
    readonly demo_frame: (a: number) => number;
    readonly demo_frames: (a: number) => number;
    readonly demo_height: (a: number) => number;
    readonly demo_image: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_new: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
    readonly demo_scenes: () => [number, number];
    readonly demo_set_alpha: (a: number, b: number) => void;
    readonly demo_step: (a: number) => [number, number, number];
    readonly demo_views: () => [number, number];
    readonly demo_width: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_drop_slice: (a: number, b: number) => void;
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
